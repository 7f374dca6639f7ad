"""Local correlation matrices and Bloch vectors of two-particle systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scipy.optimize import minimize

from .algebra import (
    ChainSpectrum,
    FermionMatrix,
    ValidationError,
    _check_point,
    _matrix,
    u11_element,
)
from .config import DEFAULT_TOLERANCES

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


@dataclass(frozen=True)
class LocalCorrelation:
    rho: float
    bloch: np.ndarray

    def matrix(self) -> np.ndarray:
        """``F = (rho + v.sigma) / 2``."""
        return 0.5 * (self.rho * np.eye(2) + np.einsum("a,aij->ij", self.bloch, PAULI))


@dataclass(frozen=True)
class BlochConfiguration:
    """Local traces ``rho`` (shape ``(m,)``) and Bloch vectors (shape ``(m, 3)``)."""

    rho: np.ndarray
    bloch: np.ndarray

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float).reshape(-1)
        bloch = np.array(self.bloch, dtype=float).reshape(-1, 3)
        if rho.shape[0] != bloch.shape[0]:
            raise ValueError("rho and bloch must describe the same number of points")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "bloch", bloch)

    @property
    def m(self) -> int:
        return self.rho.shape[0]

    @property
    def f(self) -> int:
        return 2

    def __getitem__(self, x: int) -> LocalCorrelation:
        i = _check_point(x, self.m)
        return LocalCorrelation(float(self.rho[i]), self.bloch[i].copy())

    def validate(self, tol: float | None = None) -> "BlochConfiguration":
        tol = DEFAULT_TOLERANCES.bloch if tol is None else tol
        if abs(self.rho.sum() - 2.0) > tol:
            raise ValidationError(f"sum of local traces is {self.rho.sum():.12g}, expected 2")
        total = self.bloch.sum(axis=0)
        if np.linalg.norm(total) > tol:
            raise ValidationError(f"Bloch vectors do not sum to zero: {total}")
        lengths = np.linalg.norm(self.bloch, axis=1)
        bad = np.nonzero(lengths < self.rho - tol)[0]
        if bad.size:
            x = int(bad[0])
            raise ValidationError(
                f"|v_{x + 1}| = {lengths[x]:.12g} is smaller than rho_{x + 1} = {self.rho[x]:.12g}"
            )
        return self


def correlation_matrices(psi: FermionMatrix) -> np.ndarray:
    """``F_x = -Psi^dagger S E_x Psi`` for all points, shape ``(m, f, f)``."""
    b = psi.blocks()
    sb = b * np.array([1.0, -1.0])[None, :, None]
    return -np.einsum("xai,xaj->xij", b.conj(), sb)


def _require_two(psi: FermionMatrix):
    if psi.f != 2:
        raise ValueError(f"Bloch vectors are defined for two particles, got f={psi.f}")


def local_correlation(psi: FermionMatrix, x: int) -> LocalCorrelation:
    _require_two(psi)
    i = _check_point(x, psi.m)
    fx = correlation_matrices(psi)[i]
    return LocalCorrelation(float(np.trace(fx).real),
                            np.einsum("aij,ji->a", PAULI, fx).real)


def bloch_configuration(psi: FermionMatrix) -> BlochConfiguration:
    _require_two(psi)
    f = correlation_matrices(psi)
    rho = np.trace(f, axis1=1, axis2=2).real
    v = np.einsum("aij,xji->xa", PAULI, f).real
    return BlochConfiguration(rho, v)


def chain_roots_from_bloch(a: LocalCorrelation, b: LocalCorrelation) -> ChainSpectrum:
    """Closed-chain roots from local traces and Bloch vectors of the two points."""
    base = a.rho * b.rho + float(np.dot(a.bloch, b.bloch))
    mixed = a.rho * b.bloch + b.rho * a.bloch
    cross = np.cross(a.bloch, b.bloch)
    radicand = float(np.dot(mixed, mixed) - np.dot(cross, cross))
    if radicand >= 0:
        r = np.sqrt(radicand)
        return ChainSpectrum(complex(0.25 * (base + r)), complex(0.25 * (base - r)))
    r = np.sqrt(-radicand)
    return ChainSpectrum(complex(0.25 * base, 0.25 * r), complex(0.25 * base, -0.25 * r))


def _diagonalizer(fx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``F = U^{-1} D U`` with ascending eigenvalues and rows phased to a real non-negative lead."""
    d, w = np.linalg.eigh(fx)
    u = w.conj().T
    for k in range(2):
        row = u[k]
        lead = np.flatnonzero(np.abs(row) > 1e-12)
        if lead.size:
            c = row[lead[0]]
            u[k] = row * (abs(c) / c)
    return d, u


def reconstruct_fermion_matrix(config: BlochConfiguration, tol: float | None = None) -> FermionMatrix:
    """A fermion matrix realizing the prescribed local traces and Bloch vectors."""
    config.validate(tol)
    blocks = np.zeros((config.m, 2, 2), dtype=complex)
    for x in range(config.m):
        d, u = _diagonalizer(config[x + 1].matrix())
        # eigenvalues (rho - |v|)/2 <= 0 <= (rho + |v|)/2, clipped against rounding
        mags = np.sqrt(np.array([max(-d[0], 0.0), max(d[1], 0.0)]))
        blocks[x] = mags[:, None] * u
    return FermionMatrix(blocks.reshape(2 * config.m, 2))


def configuration_gram(config: BlochConfiguration) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise ``v_x . v_y`` and the local traces; invariant under joint rotations."""
    return config.bloch @ config.bloch.T, config.rho.copy()


def gram_signature(config: BlochConfiguration, decimals: int = 6) -> tuple:
    """Label-independent fingerprint: sorted traces and sorted off-diagonal Gram entries."""
    gram, rho = configuration_gram(config)
    iu = np.triu_indices(config.m, 1)
    off = np.round(np.sort(gram[iu]), decimals) + 0.0
    return tuple(np.round(np.sort(rho), decimals) + 0.0), tuple(off)


def orientation(config: BlochConfiguration) -> float:
    """Sign of ``det(v_2 - v_1, v_3 - v_1, v_4 - v_1)`` for the first four points."""
    if config.m < 4:
        raise ValueError("orientation needs at least four points")
    v = config.bloch
    return float(np.sign(np.linalg.det(np.stack([v[1] - v[0], v[2] - v[0], v[3] - v[0]]))))


def bloch_arrays_from_blocks(blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(rho, v)`` for an ``(m, 2, 2)`` stack of local fermion matrices."""
    s = np.array([1.0, -1.0])
    f = -np.einsum("xai,xaj->xij", blocks.conj(), blocks * s[None, :, None])
    rho = (f[:, 0, 0] + f[:, 1, 1]).real
    v = np.stack([2 * f[:, 0, 1].real, -2 * f[:, 0, 1].imag, (f[:, 0, 0] - f[:, 1, 1]).real], axis=1)
    return rho, v



def _gauge_blocks(params: np.ndarray) -> np.ndarray:
    return np.array([u11_element(*p) for p in params.reshape(-1, 4)])


def gauge_orbit_distance(P, Q, restarts: int = 8, seed: int = 0,
                         max_rapidity: float = 2.0) -> float:
    """Heuristic ``min_U ||U P U^{-1} - Q||_F / ||Q||_F`` over ``U(1,1)^m``.

    A multi-start local search, so the value is an upper bound on the true
    orbit distance. Values near zero indicate gauge-equivalent operators; a
    value bounded away from zero across restarts is evidence that they are not.
    """
    P = _matrix(P)
    Q = _matrix(Q)
    if P.shape != Q.shape or P.shape[0] % 2:
        raise ValueError("P and Q must be square operators of the same even size")
    m = P.shape[0] // 2
    s = np.tile([1.0, -1.0], m)
    scale = max(np.linalg.norm(Q), 1e-300)
    pb = P.reshape(m, 2, m, 2)
    qb = Q.reshape(m, 2, m, 2)

    def objective(params):
        u = _gauge_blocks(params)
        uinv = s.reshape(m, 2)[:, :, None] * np.conj(np.swapaxes(u, 1, 2)) * s.reshape(m, 2)[:, None, :]
        moved = np.einsum("xab,xbyc,ycd->xayd", u, pb, uinv)
        return float(np.sum(np.abs(moved - qb) ** 2)) / scale**2

    rng = np.random.default_rng(seed)
    best = objective(np.zeros(4 * m))
    for _ in range(restarts):
        start = rng.uniform(0, 2 * np.pi, (m, 4))
        start[:, 1] = rng.uniform(-max_rapidity, max_rapidity, m)
        res = minimize(objective, start.ravel(), method="BFGS", options={"gtol": 1e-12})
        best = min(best, float(res.fun))
    return float(np.sqrt(best))
