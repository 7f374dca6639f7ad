"""Indefinite inner product algebra of fermion systems in discrete space-time.

The Hilbert space is fixed to ``C^{2m}`` with the pseudo-orthonormal basis
``(e^1_1, e^1_2, e^2_1, e^2_2, ...)``, so that the inner product is
``<u|v> = u^dagger S v`` with ``S = diag(1, -1, 1, -1, ...)`` and the
space-time projector ``E_x`` selects the two basis vectors of point ``x``.

Public functions label space-time points ``1..m``.  Array-valued results
(``closed_chains``, ``chain_invariants``...) are indexed ``0..m-1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances

SIGMA3 = np.diag([1.0, -1.0])


class ValidationError(ValueError):
    """Raised when an object violates one of its defining invariants."""


@dataclass(frozen=True)
class DiscreteSpacetime:
    """``m`` points, the signature matrix and the block projectors ``E_x``."""

    m: int
    signature: np.ndarray = field(repr=False)
    projectors: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return 2 * self.m


def build_spacetime(m: int) -> DiscreteSpacetime:
    if int(m) != m or m < 1:
        raise ValueError(f"number of space-time points must be a positive integer, got {m!r}")
    m = int(m)
    signature = np.diag(np.tile([1, -1], m)).astype(int)
    projectors = []
    for x in range(m):
        e = np.zeros((2 * m, 2 * m), dtype=int)
        e[2 * x, 2 * x] = e[2 * x + 1, 2 * x + 1] = 1
        projectors.append(e)
    return DiscreteSpacetime(m=m, signature=signature, projectors=tuple(projectors))


def signature_diagonal(m: int) -> np.ndarray:
    return np.tile([1.0, -1.0], m)


def inner_product(u, v, st: DiscreteSpacetime | None = None) -> complex:
    """``<u|v> = u^dagger S v``, antilinear in the first slot."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape or u.ndim != 1 or u.size % 2:
        raise ValueError(f"vectors must be 1-d of equal even length, got {u.shape} and {v.shape}")
    if st is not None and u.size != st.dim:
        raise ValueError(f"vector length {u.size} does not match 2m = {st.dim}")
    return complex(np.vdot(u, signature_diagonal(u.size // 2) * v))


@dataclass(frozen=True)
class FermionMatrix:
    """``2m x f`` complex matrix whose columns are the particle states.

    Construction does not validate; call :meth:`validate` or go through
    :func:`projector_from_fermion_matrix`.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] % 2 or a.shape[1] < 1:
            raise ValueError(f"fermion matrix must be 2m x f, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def m(self) -> int:
        return self.entries.shape[0] // 2

    @property
    def f(self) -> int:
        return self.entries.shape[1]

    def blocks(self) -> np.ndarray:
        """Local fermion matrices ``E_x Psi`` stacked as an ``(m, 2, f)`` array."""
        return self.entries.reshape(self.m, 2, self.f)

    def gram(self) -> np.ndarray:
        """``<u_i|u_j>``; equals ``-identity`` for a valid fermion matrix."""
        psi = self.entries
        return psi.conj().T @ (signature_diagonal(self.m)[:, None] * psi)

    def validate(self, tol: float | None = None) -> "FermionMatrix":
        tol = DEFAULT_TOLERANCES.gram if tol is None else tol
        if self.f > self.m:
            raise ValidationError(f"number of particles f={self.f} exceeds m={self.m}")
        dev = np.abs(self.gram() + np.eye(self.f))
        i, j = np.unravel_index(int(np.argmax(dev)), dev.shape)
        if dev[i, j] > tol:
            expected = -1 if i == j else 0
            value = self.gram()[i, j]
            raise ValidationError(
                f"Gram entry <u_{i + 1}|u_{j + 1}> = {value:.6g} deviates from {expected} "
                f"by {dev[i, j]:.3g} (tolerance {tol:g})"
            )
        return self


@dataclass(frozen=True)
class FermionicProjector:
    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] % 2:
            raise ValueError(f"projector must be a square matrix of even size, got {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def m(self) -> int:
        return self.entries.shape[0] // 2

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.entries).real))

    def check(self, tol: Tolerances = DEFAULT_TOLERANCES) -> "FermionicProjector":
        p = self.entries
        s = signature_diagonal(self.m)
        if np.max(np.abs(p @ p - p), initial=0.0) > tol.idempotent:
            raise ValidationError("projector is not idempotent: P^2 != P")
        ps = p * s[None, :]
        if np.max(np.abs(ps.conj().T - ps), initial=0.0) > tol.self_adjoint:
            raise ValidationError("projector is not self-adjoint: (PS)^dagger != PS")
        return self


Operator = Union[FermionicProjector, np.ndarray]


def _matrix(obj) -> np.ndarray:
    return np.asarray(getattr(obj, "entries", obj), dtype=complex)


def projector_from_fermion_matrix(psi: FermionMatrix, validate: bool = True,
                                  tol: float | None = None) -> FermionicProjector:
    """``P = -Psi Psi^dagger S``."""
    if not isinstance(psi, FermionMatrix):
        psi = FermionMatrix(psi)
    if validate:
        psi.validate(tol)
    a = psi.entries
    return FermionicProjector(-(a @ a.conj().T) * signature_diagonal(psi.m)[None, :])


def operator_from_columns(psi) -> np.ndarray:
    """``-Psi Psi^dagger S`` without any normalization check (class P^f operators)."""
    a = _matrix(psi)
    return -(a @ a.conj().T) * signature_diagonal(a.shape[0] // 2)[None, :]


def kernel_blocks(P: Operator) -> np.ndarray:
    """Discrete kernels ``P(x, y)`` as an ``(m, m, 2, 2)`` array."""
    p = _matrix(P)
    m = p.shape[0] // 2
    return p.reshape(m, 2, m, 2).transpose(0, 2, 1, 3)


def _check_point(x: int, m: int) -> int:
    if int(x) != x or not 1 <= x <= m:
        raise IndexError(f"space-time point {x!r} out of range 1..{m}")
    return int(x) - 1


def closed_chain(P: Operator, x: int, y: int) -> np.ndarray:
    """``A_xy = P(x, y) P(y, x)`` restricted to ``E_x(H)``."""
    p = _matrix(P)
    m = p.shape[0] // 2
    i, j = _check_point(x, m), _check_point(y, m)
    pxy = p[2 * i:2 * i + 2, 2 * j:2 * j + 2]
    pyx = p[2 * j:2 * j + 2, 2 * i:2 * i + 2]
    return pxy @ pyx


def closed_chains(P: Operator) -> np.ndarray:
    k = kernel_blocks(P)
    return np.einsum("xyab,yxbc->xyac", k, k)


@dataclass(frozen=True)
class ChainSpectrum:
    lambda_plus: complex
    lambda_minus: complex

    @property
    def trace(self) -> float:
        return float((self.lambda_plus + self.lambda_minus).real)

    @property
    def det(self) -> float:
        return float((self.lambda_plus * self.lambda_minus).real)

    @property
    def discriminant(self) -> float:
        """``Tr(A)^2 - 4 det(A) = (lambda_+ - lambda_-)^2``, real for s-self-adjoint ``A``."""
        return float(((self.lambda_plus - self.lambda_minus) ** 2).real)

    @property
    def weight_one(self) -> float:
        return abs(self.lambda_plus) + abs(self.lambda_minus)

    @property
    def weight_two(self) -> float:
        return abs(self.lambda_plus) ** 2 + abs(self.lambda_minus) ** 2

    @property
    def is_real(self) -> bool:
        return self.lambda_plus.imag == 0.0 and self.lambda_minus.imag == 0.0


def spectrum_from_invariants(trace: float, det: float) -> ChainSpectrum:
    """Roots of ``lambda^2 - trace lambda + det``, ordered by real then imaginary part."""
    disc = trace * trace - 4.0 * det
    if disc >= 0:
        r = np.sqrt(disc)
        return ChainSpectrum(complex(0.5 * (trace + r)), complex(0.5 * (trace - r)))
    r = np.sqrt(-disc)
    return ChainSpectrum(complex(0.5 * trace, 0.5 * r), complex(0.5 * trace, -0.5 * r))


def chain_roots(A, tol: float | None = None) -> ChainSpectrum:
    """Spectrum of a closed chain, which must be self-adjoint w.r.t. ``s = diag(1, -1)``."""
    tol = DEFAULT_TOLERANCES.self_adjoint if tol is None else tol
    a = np.asarray(A, dtype=complex)
    if a.shape != (2, 2):
        raise ValueError(f"closed chain must be 2x2, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    a_s = a @ SIGMA3
    if np.max(np.abs(a_s.conj().T - a_s)) > tol * scale:
        raise ValidationError("matrix is not self-adjoint with respect to s = diag(1, -1)")
    trace = np.trace(a)
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return spectrum_from_invariants(float(trace.real), float(det.real))


def chain_invariants(P: Operator) -> tuple[np.ndarray, np.ndarray]:
    """Real trace and determinant of every closed chain, as two ``(m, m)`` arrays."""
    a = closed_chains(P)
    trace = (a[..., 0, 0] + a[..., 1, 1]).real
    det = (a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]).real
    return trace, det


def spectral_weights(trace, det) -> tuple[np.ndarray, np.ndarray]:
    """``|A|`` and ``|A^2|`` from the characteristic-polynomial coefficients."""
    trace = np.asarray(trace, dtype=float)
    det = np.asarray(det, dtype=float)
    disc = trace * trace - 4.0 * det
    real = disc >= 0
    r = np.sqrt(np.where(real, disc, 0.0))
    lp = 0.5 * (trace + r)
    lm = 0.5 * (trace - r)
    mod2 = np.where(real, 0.0, det)  # |lambda|^2 of a conjugate pair
    w1 = np.where(real, np.abs(lp) + np.abs(lm), 2.0 * np.sqrt(np.abs(mod2)))
    w2 = np.where(real, lp * lp + lm * lm, 2.0 * np.abs(mod2))
    return w1, w2


def lagrangian(spec: ChainSpectrum, mu: float) -> float:
    return spec.weight_two - mu * spec.weight_one ** 2


def action(P: Operator, mu: float) -> float:
    """``S_mu = sum_{x,y} |A_xy^2| - mu |A_xy|^2``."""
    w1, w2 = spectral_weights(*chain_invariants(P))
    return float(np.sum(w2 - mu * w1 * w1))


def constraint_value(P: Operator) -> float:
    """``sum_{x,y} |A_xy|^2``, the quantity fixed to ``kappa``."""
    w1, _ = spectral_weights(*chain_invariants(P))
    return float(np.sum(w1 * w1))


def target_value(P: Operator) -> float:
    """``Z = sum_{x,y} |A_xy^2|``."""
    _, w2 = spectral_weights(*chain_invariants(P))
    return float(np.sum(w2))


def local_traces(P: Operator) -> np.ndarray:
    """``rho_x = Tr(E_x P)`` for all points."""
    d = np.diagonal(_matrix(P)).real
    return d[0::2] + d[1::2]


# -- gauge and outer symmetries ---------------------------------------------


def is_pseudo_unitary(U, tol: float | None = None) -> bool:
    tol = DEFAULT_TOLERANCES.pseudo_unitary if tol is None else tol
    u = np.asarray(U, dtype=complex)
    s = signature_diagonal(u.shape[0] // 2)
    lhs = u.conj().T @ (s[:, None] * u)
    return bool(np.max(np.abs(lhs - np.diag(s))) <= tol * max(1.0, float(np.max(np.abs(u))) ** 2))


def pseudo_inverse(U) -> np.ndarray:
    """``U^{-1} = S U^dagger S`` for a pseudo-unitary ``U``."""
    u = np.asarray(U, dtype=complex)
    s = signature_diagonal(u.shape[0] // 2)
    return s[:, None] * u.conj().T * s[None, :]


@dataclass(frozen=True)
class GaugeTransform:
    """Block-diagonal element of ``U(1,1)^m``."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocks, dtype=complex)
        if b.ndim != 3 or b.shape[1:] != (2, 2):
            raise ValueError(f"gauge blocks must have shape (m, 2, 2), got {b.shape}")
        for x, u in enumerate(b):
            if not is_pseudo_unitary(u):
                raise ValidationError(f"gauge block {x + 1} is not in U(1,1)")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def m(self) -> int:
        return self.blocks.shape[0]

    def matrix(self) -> np.ndarray:
        m = self.m
        u = np.zeros((2 * m, 2 * m), dtype=complex)
        for x in range(m):
            u[2 * x:2 * x + 2, 2 * x:2 * x + 2] = self.blocks[x]
        return u

    def inverse_matrix(self) -> np.ndarray:
        return pseudo_inverse(self.matrix())


def u11_element(phase: float, rapidity: float, a: float, b: float) -> np.ndarray:
    """``e^{i phase} [[cosh t e^{ia}, sinh t e^{ib}], [sinh t e^{-ib}, cosh t e^{-ia}]]``."""
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    core = np.array([[ch * np.exp(1j * a), sh * np.exp(1j * b)],
                     [sh * np.exp(-1j * b), ch * np.exp(-1j * a)]])
    return np.exp(1j * phase) * core


def random_gauge(m: int, rng: np.random.Generator, max_rapidity: float = 1.0) -> GaugeTransform:
    blocks = [
        u11_element(*rng.uniform(0, 2 * np.pi, 1), rng.uniform(-max_rapidity, max_rapidity),
                    *rng.uniform(0, 2 * np.pi, 2))
        for _ in range(m)
    ]
    return GaugeTransform(np.array(blocks))


def apply_gauge(obj, U: GaugeTransform):
    """``Psi -> U Psi`` for fermion matrices, ``P -> U P U^{-1}`` for projectors."""
    if isinstance(obj, FermionMatrix):
        if obj.m != U.m:
            raise ValueError("gauge transform and fermion matrix have different m")
        return FermionMatrix(U.matrix() @ obj.entries)
    p = _matrix(obj)
    if p.shape[0] != 2 * U.m:
        raise ValueError("gauge transform and operator have different m")
    out = U.matrix() @ p @ U.inverse_matrix()
    return FermionicProjector(out) if isinstance(obj, FermionicProjector) else out


def permutation_unitary(sigma: Sequence[int]) -> np.ndarray:
    """Block permutation matrix mapping ``E_x(H)`` onto ``E_{sigma(x)}(H)``.

    ``sigma`` is in one-line notation with values ``1..m``.
    """
    m = len(sigma)
    u = np.zeros((2 * m, 2 * m), dtype=complex)
    for x, sx in enumerate(sigma):
        u[2 * (sx - 1):2 * sx, 2 * x:2 * x + 2] = np.eye(2)
    return u


def check_outer_symmetry(P: Operator, sigma: Sequence[int], U, tol: float | None = None) -> bool:
    """True iff ``U P U^{-1} = P`` and ``U E_x U^{-1} = E_{sigma(x)}`` for every point."""
    tol = DEFAULT_TOLERANCES.outer_symmetry if tol is None else tol
    p = _matrix(P)
    m = p.shape[0] // 2
    if sorted(sigma) != list(range(1, m + 1)):
        raise ValueError(f"{sigma!r} is not a permutation of 1..{m}")
    u = np.asarray(U, dtype=complex)
    if not is_pseudo_unitary(u):
        return False
    u_inv = pseudo_inverse(u)
    if np.max(np.abs(u @ p @ u_inv - p)) > tol:
        return False
    st = build_spacetime(m)
    for x in range(m):
        target = st.projectors[sigma[x] - 1]
        if np.max(np.abs(u @ st.projectors[x] @ u_inv - target)) > tol:
            return False
    return True


def all_permutations(m: int):
    return [tuple(p) for p in itertools.permutations(range(1, m + 1))]
