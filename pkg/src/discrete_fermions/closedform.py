"""Analytic fermion-matrix families and closed-form minima.

These serve as oracles for the optimizers and as explicit witnesses for the
unbounded regimes of the auxiliary action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import FermionMatrix, action, permutation_unitary, projector_from_fermion_matrix
from .bloch import BlochConfiguration

SQ2, SQ3, SQ6 = np.sqrt(2.0), np.sqrt(3.0), np.sqrt(6.0)

THREE_POINT_KAPPA_SWITCH = 68.0 / 81.0


def one_particle_minimizer(m: int, mu: float) -> tuple[FermionMatrix, float]:
    """Delocalized particle with ``E_x u = (0, 1/sqrt(m))`` and action ``(1 - mu)/m^2``."""
    if m < 1:
        raise ValueError("m must be positive")
    if mu == 1:
        raise ValueError("mu = 1: the one-particle action vanishes identically, every projector minimizes")
    if mu > 1:
        raise ValueError("mu > 1: the one-particle action is unbounded below (use divergence_witness)")
    psi = np.zeros((2 * m, 1))
    psi[1::2, 0] = 1.0 / np.sqrt(m)
    return FermionMatrix(psi), (1.0 - mu) / m ** 2


def two_point_critical() -> FermionMatrix:
    """Each particle localized at its own point."""
    return FermionMatrix([[0, 0], [1, 0], [0, 0], [0, 1]])


def two_point_family(theta: float) -> FermionMatrix:
    """Two-point systems with S_2 symmetry, ``|v_x| = 1 + 2 sinh^2 theta``."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    sh, ch = np.sinh(theta), np.cosh(theta)
    return FermionMatrix([[sh, 0], [0, ch], [0, sh], [ch, 0]])


def three_point_family(theta: float) -> FermionMatrix:
    """S_3-symmetric systems on three points; the Bloch vectors form a triangle."""
    if theta < 0:
        raise ValueError("theta must be non-negative")
    sh, ch = np.sinh(theta), np.cosh(theta)
    psi = np.array([
        [-2 * sh, 0],
        [0, -2 * ch],
        [sh, -SQ3 * sh],
        [SQ3 * ch, ch],
        [sh, SQ3 * sh],
        [-SQ3 * ch, ch],
    ]) / SQ6
    return FermionMatrix(psi)


def three_point_length(theta: float) -> float:
    """Common Bloch-vector length ``(2/3)(1 + 2 sinh^2 theta)`` of :func:`three_point_family`."""
    return 2.0 / 3.0 * (1.0 + 2.0 * np.sinh(theta) ** 2)


def three_point_theta(v: float) -> float:
    """Inverse of :func:`three_point_length`; requires ``v >= 2/3``."""
    if v < 2.0 / 3.0 - 1e-15:
        raise ValueError("Bloch-vector length below 2/3 is not realized by the S_3 family")
    return float(np.arcsinh(np.sqrt(max((1.5 * v - 1.0) / 2.0, 0.0))))


def three_point_action(v: float) -> float:
    """Critical action of the S_3 family as a function of the Bloch-vector length."""
    v2 = v * v
    s = 2.0 / 3.0 * v2
    if 16.0 / 27.0 - v2 > 0:
        s += v2 / 3.0 - 9.0 / 16.0 * v2 * v2
    return s


def three_point_permutation_unitary(sigma, theta: float = 0.0) -> np.ndarray:
    """Outer-symmetry unitary of the S_3 family.

    Second components are permuted; first components are permuted with the
    sign of the permutation, which is only needed when ``theta > 0``.
    """
    u = permutation_unitary(sigma)
    if theta > 0 and _parity(sigma) < 0:
        u[0::2, :] *= -1
    return u


def _parity(sigma) -> int:
    perm = [s - 1 for s in sigma]
    sign, seen = 1, [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


# -- four points --------------------------------------------------------------

A4_SIGMA = (1, 3, 4, 2)
A4_TAU = (2, 1, 4, 3)

U_SIGMA_4 = np.array([
    [1, 0, 0, 0],
    [0, 0, 0, 1],
    [0, 1, 0, 0],
    [0, 0, 1, 0],
], dtype=complex)

U_TAU_4 = np.array([
    [0, 1, 0, 0],
    [1, 0, 0, 0],
    [0, 0, 0, 1j],
    [0, 0, -1j, 0],
], dtype=complex)


def four_point_family(phi: float) -> FermionMatrix:
    """A_4-symmetric tetrahedral systems; ``phi`` is ``+2pi/3`` or ``-2pi/3``."""
    if not np.isclose(abs(phi), 2 * np.pi / 3, rtol=0, atol=1e-12):
        raise ValueError("phi must be +2pi/3 or -2pi/3")
    e = np.exp(1j * phi)
    psi_small = np.array([[SQ3, 0], [1, SQ2], [1, SQ2 * e], [1, SQ2 * np.conj(e)]]) / SQ6
    psi = np.zeros((8, 2), dtype=complex)
    psi[1::2] = psi_small
    return FermionMatrix(psi)


def four_point_generators(phi: float = 2 * np.pi / 3) -> dict:
    """Full ``8 x 8`` unitaries ``U_4 (x) identity_2`` for the generators.

    The system at ``-2pi/3`` is the complex conjugate of the one at ``+2pi/3``,
    so its unitaries are conjugated as well.
    """
    eye = np.eye(2)
    us, ut = U_SIGMA_4, U_TAU_4
    if phi < 0:
        us, ut = us.conj(), ut.conj()
    return {A4_SIGMA: np.kron(us, eye), A4_TAU: np.kron(ut, eye)}


# -- five points --------------------------------------------------------------

FIVE_POINT_AXES = np.array([
    [1.0, 0.0, 0.0],
    [-0.5, SQ3 / 2, 0.0],
    [-0.5, -SQ3 / 2, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
])


def _check_alpha(alpha: float):
    if not 0 < alpha < 2.0 / 3.0:
        raise ValueError(f"alpha must lie in (0, 2/3), got {alpha}")


def five_point_beta(alpha: float) -> float:
    return (2.0 - 3.0 * alpha) / 2.0


def five_point_bloch(alpha: float) -> BlochConfiguration:
    """Triangle of length ``alpha`` plus an axis pair of length ``beta``, with ``|v_x| = rho_x``."""
    _check_alpha(alpha)
    beta = five_point_beta(alpha)
    lengths = np.array([alpha] * 3 + [beta] * 2)
    return BlochConfiguration(lengths, lengths[:, None] * FIVE_POINT_AXES)


def five_point_action(alpha: float) -> float:
    _check_alpha(alpha)
    return 81.0 / 8.0 * alpha ** 4 - 18.0 * alpha ** 3 + 15.0 * alpha ** 2 - 6.0 * alpha + 1.0


def five_point_optimum() -> float:
    """Closed-form stationary point of the five-point action."""
    c = 2.0 + 2.0 * np.sqrt(17.0)
    return -c ** (1.0 / 3.0) / 9.0 + 4.0 / 9.0 * c ** (-1.0 / 3.0) + 4.0 / 9.0


def five_point_optimum_cubic() -> float:
    """Same stationary point from the real root of ``27a^3 - 36a^2 + 20a - 4``."""
    roots = np.roots([27.0, -36.0, 20.0, -4.0])
    real = roots[np.abs(roots.imag) < 1e-9].real
    return float(real[(real > 0) & (real < 2.0 / 3.0)][0])


# -- constrained closed forms -------------------------------------------------


@dataclass(frozen=True)
class ConstrainedOptimum:
    kappa: float
    v: float
    Z: float
    mu: float | None = None
    spacelike: bool | None = None

    def fermion_matrix(self, m: int) -> FermionMatrix:
        if m == 2:
            return two_point_family(two_point_theta(self.v))
        if m == 3:
            return three_point_family(three_point_theta(self.v))
        raise ValueError("closed forms exist only for m = 2 and m = 3")


def two_point_theta(v: float) -> float:
    """Solve ``1 + 2 sinh^2 theta = v``."""
    if v < 1:
        raise ValueError("two-point Bloch length must be at least 1")
    return float(np.arcsinh(np.sqrt((v - 1.0) / 2.0)))


def two_point_constrained(kappa: float) -> ConstrainedOptimum:
    if kappa < 2:
        raise ValueError(f"kappa = {kappa} < 2: the two-point constraint set is empty")
    root = np.sqrt(kappa - 1.0)
    return ConstrainedOptimum(
        kappa=kappa,
        v=(kappa - 1.0) ** 0.25,
        Z=float(root + kappa / 2.0),
        mu=float(0.5 * (1.0 + 1.0 / root)),
        spacelike=False,
    )


def two_point_action_mu(v: float, mu: float) -> float:
    """``S_mu(v) = v^2 + (1/2 - mu)(1 + v^4)`` along the two-point family."""
    return v * v + (0.5 - mu) * (1.0 + v ** 4)


def two_point_stationarity_residual(kappa: float) -> float:
    """``dS_mu/dv`` at the closed-form optimum, with the closed-form multiplier."""
    opt = two_point_constrained(kappa)
    return 2.0 * opt.v + 4.0 * (0.5 - opt.mu) * opt.v ** 3


def three_point_constrained(kappa: float, literal: bool = False) -> ConstrainedOptimum:
    """S_3-symmetric constrained optimum on three points.

    For ``kappa > 68/81`` the target is ``S(v) + kappa/2``. ``literal=True``
    uses ``8/81 (2 + sqrt(81 kappa - 32)) + kappa/2`` instead, which jumps
    from 22/27 to 98/81 at the switch.
    """
    if kappa < 2.0 / 3.0:
        raise ValueError(f"kappa = {kappa} < 2/3: the three-point S_3 constraint set is empty")
    if kappa <= THREE_POINT_KAPPA_SWITCH:
        v = (72.0 * kappa - 32.0) ** 0.25 / 3.0
        z = 2.0 / 9.0 * (np.sqrt(18.0 * kappa - 8.0) + 1.0)
        return ConstrainedOptimum(kappa, float(v), float(z), spacelike=False)
    w = np.sqrt(81.0 * kappa - 32.0)
    v = np.sqrt(12.0 + 6.0 * w) / 9.0
    if literal:
        z = 8.0 / 81.0 * (2.0 + w) + kappa / 2.0
    else:
        z = three_point_action(v) + kappa / 2.0
    return ConstrainedOptimum(kappa, float(v), float(z), spacelike=True)


def three_point_branches_at_switch() -> tuple[float, float]:
    """Target value at ``kappa = 68/81`` from the two branch formulas."""
    k = THREE_POINT_KAPPA_SWITCH
    lower = 2.0 / 9.0 * (np.sqrt(18.0 * k - 8.0) + 1.0)
    w = np.sqrt(81.0 * k - 32.0)
    upper = three_point_action(np.sqrt(12.0 + 6.0 * w) / 9.0) + k / 2.0
    return float(lower), float(upper)


# -- unboundedness witnesses ---------------------------------------------------

WITNESS_KINDS = ("mu-above-half", "one-particle-mu-above-one")


def divergence_witness(kind: str, alpha: float, mu: float, m: int = 2) -> tuple[FermionMatrix, float]:
    """Explicit families along which ``S_mu`` is unbounded below.

    ``mu-above-half`` uses two particles on the first two points and diverges
    like ``8 alpha^4 (1 - 2 mu)``; ``one-particle-mu-above-one`` diverges for
    ``mu > 1``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if m < 2:
        raise ValueError("witnesses need at least two points")
    a, b = np.sqrt(alpha), np.sqrt(alpha + 1.0)
    if kind == "mu-above-half":
        psi = np.zeros((2 * m, 2))
        psi[0, 0], psi[3, 0] = a, b   # sqrt(alpha) e^1_1 + sqrt(alpha+1) e^2_2
        psi[2, 1], psi[1, 1] = a, b   # sqrt(alpha) e^2_1 + sqrt(alpha+1) e^1_2
    elif kind == "one-particle-mu-above-one":
        psi = np.zeros((2 * m, 1))
        psi[0, 0], psi[3, 0] = a, b
    else:
        raise ValueError(f"unknown witness kind {kind!r}; expected one of {WITNESS_KINDS}")
    fm = FermionMatrix(psi)
    return fm, action(projector_from_fermion_matrix(fm), mu)


# -- Bloch-degenerate systems --------------------------------------------------


def degenerate_three_point_family(alpha: float) -> FermionMatrix:
    """Two particles on three points whose Bloch data do not depend on ``alpha``.

    ``rho = (1, 1, 0)``, ``v_1 = -v_2 = e_z`` and ``v_3 = 0`` for every ``alpha``,
    while projectors with different ``|alpha|`` are not gauge equivalent.
    """
    a = float(alpha)
    return FermionMatrix(np.array([
        [0, 0], [1, 0],
        [0, 0], [0, 1],
        [a, 1], [a, 1],
    ], dtype=complex))
