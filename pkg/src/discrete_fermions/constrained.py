"""Derivative-free random-neighbor descent for the variational principle with constraint.

Candidates are whole fermion matrices (complex ``2m x f``). Closed-chain
invariants are computed in batches from the local correlation matrices: the
roots of ``A_xy`` are the non-zero eigenvalues of ``F_x F_y``, so

    Tr A_xy = Tr(F_x F_y),    det A_xy = (Tr(F_x F_y)^2 - Tr((F_x F_y)^2)) / 2.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from .algebra import FermionMatrix, spectral_weights

FEASIBLE_RESIDUAL = 1e-4
SIGMA_FEASIBLE = 1e-8
RETRACT_TOL = 1e-8


# -- batched evaluation ---------------------------------------------------------


def _as_batch(psi) -> np.ndarray:
    a = np.asarray(psi.entries if isinstance(psi, FermionMatrix) else psi, dtype=complex)
    return a[None] if a.ndim == 2 else a


def correlation_batch(psi) -> np.ndarray:
    """``F_x`` for a batch of fermion matrices: shape ``(n, m, f, f)``."""
    a = _as_batch(psi)
    n, two_m, f = a.shape
    b = a.reshape(n, two_m // 2, 2, f)
    sb = b * np.array([1.0, -1.0])[None, None, :, None]
    return -np.einsum("nxai,nxaj->nxij", b.conj(), sb)


def invariants_batch(psi) -> tuple[np.ndarray, np.ndarray]:
    """Trace and determinant of every closed chain, each of shape ``(n, m, m)``."""
    fx = correlation_batch(psi)
    c = np.einsum("nxij,nyjk->nxyik", fx, fx)
    t = np.einsum("nxyii->nxy", c).real
    t2 = np.einsum("nxyij,nxyji->nxy", c, c).real
    return t, 0.5 * (t * t - t2)


def weights_batch(psi) -> tuple[np.ndarray, np.ndarray]:
    """``(sum |A_xy|^2, sum |A_xy^2|)`` per candidate."""
    t, d = invariants_batch(psi)
    w1, w2 = spectral_weights(t, d)
    return (w1 * w1).sum(axis=(1, 2)), w2.sum(axis=(1, 2))


def gram_batch(psi) -> np.ndarray:
    """``<u_i|u_j>`` per candidate, shape ``(n, f, f)``."""
    a = _as_batch(psi)
    s = np.ones(a.shape[1])
    s[1::2] = -1.0
    return np.einsum("nai,naj->nij", a.conj(), a * s[None, :, None])


def penalty_sigma(psi, L_norm: float = 1000.0, L_orth: float = 1000.0) -> np.ndarray | float:
    """``L_norm sum_i |<u_i|u_i> + 1| + L_orth sum_{i<j} |<u_i|u_j>|``.

    Returns a float for a single fermion matrix and an array for a batch.
    """
    single = isinstance(psi, FermionMatrix) or np.asarray(psi).ndim == 2
    g = gram_batch(psi)
    f = g.shape[1]
    diag = np.abs(np.einsum("nii->ni", g).real + 1.0).sum(axis=1)
    iu = np.triu_indices(f, 1)
    off = np.abs(g[:, iu[0], iu[1]]).sum(axis=1)
    out = L_norm * diag + L_orth * off
    return float(out[0]) if single else out


# -- candidate maps ---------------------------------------------------------------


def normalize_batch(psi) -> np.ndarray:
    """Map candidates to exactly pseudo-orthonormal ones via ``Psi G^{-1/2}``.

    Candidates whose columns do not span a negative-definite subspace become
    NaN, and so do candidates so ill-conditioned that the result misses
    normalization by more than ``RETRACT_TOL`` (cancellation at large entries).
    """
    a = _as_batch(psi)
    g = -gram_batch(a)
    g = 0.5 * (g + np.conj(np.swapaxes(g, 1, 2)))
    w, q = np.linalg.eigh(g)
    ok = w.min(axis=1) > 1e-12
    w = np.where(ok[:, None], w, 1.0)
    inv_sqrt = np.einsum("nij,nj,nkj->nik", q, w ** -0.5, q.conj())
    out = a @ inv_sqrt
    dev = np.abs(gram_batch(out) + np.eye(a.shape[2])).max(axis=(1, 2))
    out[~ok | ~(dev <= RETRACT_TOL)] = np.nan
    return out


def trace_rescale_batch(psi) -> np.ndarray:
    """Class ``P^f`` candidates: every column of negative norm, rescaled so ``Tr P = f``.

    Candidates with a column of non-negative norm become NaN.
    """
    a = _as_batch(psi)
    norms = np.einsum("nii->ni", gram_batch(a)).real
    ok = (norms < 0).all(axis=1)
    f = a.shape[2]
    scale = np.sqrt(f / np.where(ok, -norms.sum(axis=1), 1.0))
    out = a * scale[:, None, None]
    out[~ok] = np.nan
    return out


# -- random descent -------------------------------------------------------------


@dataclass
class SearchState:
    """Current point, its objective value, step scale and bookkeeping."""

    point: np.ndarray
    value: float
    delta: float = 1.0
    evaluations: int = 0
    moves: int = 0
    shrinks: int = 0
    status: str = "running"


def random_descent(objective: Callable[[np.ndarray], np.ndarray], start, seed,
                   neighbors: int = 64, delta0: float = 1.0, shrink: float = 0.75,
                   delta_min: float = 1e-6, max_evals: int = 1_000_000,
                   transform: Callable[[np.ndarray], np.ndarray] | None = None) -> SearchState:
    """Move to the best of ``neighbors`` random neighbors while it improves, else shrink the step.

    Parameters
    ----------
    objective : callable
        Maps a batch ``(n, *shape)`` to ``n`` values; NaN candidates count as infinite.
    start : array_like
        Initial point (real or complex).
    seed : int or numpy.random.Generator
        Source of the increments. Complex points get independent real and
        imaginary increments, each uniform in ``[-delta, delta]``.
    transform : callable, optional
        Applied to every candidate batch before evaluation (for instance a
        normalization onto the constraint set).

    Returns
    -------
    SearchState
        ``status`` is ``"converged"`` once ``delta < delta_min`` and ``"budget"``
        if ``max_evals`` ran out first.
    """
    if neighbors < 1:
        raise ValueError("neighbor count must be at least 1")
    if not 0 < shrink < 1 or delta0 <= 0 or delta_min <= 0:
        raise ValueError("need 0 < shrink < 1 and positive step scales")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    point = np.array(start)
    is_complex = np.iscomplexobj(point)
    first = point[None] if transform is None else transform(point[None])
    val = _values(objective, first)[0]
    point = first[0]
    state = SearchState(point, float(val), delta0, evaluations=1)
    while state.delta >= delta_min:
        if state.evaluations + neighbors > max_evals:
            state.status = "budget"
            return state
        shape = (neighbors,) + point.shape
        inc = rng.uniform(-1.0, 1.0, shape)
        if is_complex:
            inc = inc + 1j * rng.uniform(-1.0, 1.0, shape)
        cand = state.point[None] + state.delta * inc
        if transform is not None:
            cand = transform(cand)
        vals = _values(objective, cand)
        state.evaluations += neighbors
        k = int(np.argmin(vals))  # ties resolve to the lowest index
        if vals[k] < state.value:
            state.point, state.value = cand[k], float(vals[k])
            state.moves += 1
        else:
            state.delta *= shrink
            state.shrinks += 1
    state.status = "converged"
    return state


def _values(objective, cand) -> np.ndarray:
    vals = np.asarray(objective(cand), dtype=float)
    return np.where(np.isnan(vals), np.inf, vals)


def shrink_count(delta0: float, shrink: float = 0.75, delta_min: float = 1e-6) -> int:
    """Number of shrinks until ``delta < delta_min`` when no neighbor ever improves."""
    n = math.ceil(math.log(delta0 / delta_min) / math.log(1.0 / shrink))
    # guard the boundary case delta0 * shrink**n == delta_min exactly
    return n + 1 if delta0 * shrink ** n >= delta_min else n


# -- drivers -------------------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    """Random-descent settings shared by the constrained drivers.

    With ``retract`` every candidate is renormalized before evaluation, so the
    normalization penalty vanishes identically; without it the penalty weights
    ``L_norm`` and ``L_orth`` enforce normalization as a plain L1 penalty.
    The best restart is refined by one more descent with ``polish_neighbors``
    candidates per step, starting at ``polish_delta0`` and shrinking by
    ``polish_shrink``; ``polish_neighbors = 0`` skips it.
    """

    neighbors: int = 64
    delta0: float = 1.0
    shrink: float = 0.75
    delta_min: float = 1e-6
    L_norm: float = 1000.0
    L_orth: float = 1000.0
    L_side: float = 10.0
    restarts: int = 16
    retract: bool = True
    max_evals: int = 1_000_000
    max_escalations: int = 20
    seed: int = 0
    polish_neighbors: int = 1024
    polish_delta0: float = 1e-2
    polish_shrink: float = 0.9

    def __post_init__(self):
        if self.neighbors < 1 or self.restarts < 1:
            raise ValueError("neighbors and restarts must be positive")
        if min(self.L_norm, self.L_orth, self.L_side) <= 0:
            raise ValueError("penalty weights must be positive")
        if self.max_evals < 1 or self.max_escalations < 0:
            raise ValueError("budgets must be positive")
        if self.polish_neighbors < 0 or self.polish_delta0 <= 0 or not 0 < self.polish_shrink < 1:
            raise ValueError("need polish_neighbors >= 0, polish_delta0 > 0 and 0 < polish_shrink < 1")


@dataclass
class ConstrainedResult:
    m: int
    f: int
    kappa: float | None
    Z: float
    constraint_value: float
    constraint_residual: float
    sigma: float
    feasible: bool
    entries: np.ndarray
    seed: int
    evaluations: int
    wall_time: float
    is_projector: bool | None = None

    @property
    def fermion_matrix(self) -> FermionMatrix:
        return FermionMatrix(self.entries)

    def summary(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "entries"}
        return out


def _check_mf(m: int, f: int):
    if m < 1 or f < 1:
        raise ValueError("m and f must be positive")
    if f > m:
        raise ValueError(f"f={f} particles do not fit into m={m} points (need f <= m)")


def random_fermion_entries(m: int, f: int, rng: np.random.Generator,
                           transform: Callable | None = None) -> np.ndarray:
    """Real and imaginary parts uniform in ``(-1, 1)``.

    With ``transform``, draws are repeated until the transformed matrix is
    admissible (not NaN).
    """
    while True:
        a = rng.uniform(-1, 1, (2 * m, f)) + 1j * rng.uniform(-1, 1, (2 * m, f))
        if transform is None or not np.isnan(transform(a)).any():
            return a


def _descend(objective, start, rng, config, transform, delta0=None):
    return random_descent(objective, start, rng, neighbors=config.neighbors,
                          delta0=config.delta0 if delta0 is None else delta0,
                          shrink=config.shrink, delta_min=config.delta_min,
                          max_evals=config.max_evals, transform=transform)


def _polish(objective, point, rng, config, transform):
    return random_descent(objective, point, rng, neighbors=config.polish_neighbors,
                          delta0=config.polish_delta0, shrink=config.polish_shrink,
                          delta_min=config.delta_min, max_evals=config.max_evals, transform=transform)


def _result(m, f, kappa, psi, config, seed, evals, start, pf=False):
    k_val, z_val = weights_batch(psi)
    sig = 0.0 if pf else penalty_sigma(psi, config.L_norm, config.L_orth)
    resid = abs(k_val[0] - kappa) if kappa is not None else 0.0
    feasible = resid <= FEASIBLE_RESIDUAL and (pf or sig <= SIGMA_FEASIBLE * max(config.L_norm, config.L_orth))
    return ConstrainedResult(
        m=m, f=f, kappa=kappa, Z=float(z_val[0]), constraint_value=float(k_val[0]),
        constraint_residual=float(resid), sigma=float(sig), feasible=bool(feasible),
        entries=np.array(psi), seed=seed, evaluations=evals, wall_time=time.perf_counter() - start,
        is_projector=is_projector(psi) if pf else None,
    )


def is_projector(psi, tol: float = 1e-4) -> bool:
    """Whether ``P = -Psi Psi^dagger S`` is idempotent within ``tol`` (relative to ``|P|``)."""
    a = np.asarray(psi, dtype=complex)
    s = np.ones(a.shape[0])
    s[1::2] = -1
    p = -(a @ a.conj().T) * s[None, :]
    return bool(np.abs(p @ p - p).max() <= tol * max(1.0, np.abs(p).max()))


def _sigma_penalty(config):
    if config.retract:
        return lambda c: 0.0
    return lambda c: penalty_sigma(c, config.L_norm, config.L_orth)


def kappa_min(m: int, f: int, config: SearchConfig = SearchConfig()) -> ConstrainedResult:
    """Smallest attainable ``sum |A_xy|^2`` over fermionic projectors, best of ``config.restarts``.

    Without retraction the normalization weights are doubled between rounds
    until the penalty is negligible and the value stops improving by 1e-9.
    """
    _check_mf(m, f)
    start = time.perf_counter()
    transform = normalize_batch if config.retract else None
    best = None
    evals = 0
    for i in range(config.restarts):
        seed = config.seed + i
        rng = np.random.default_rng(seed)
        cfg = config
        state = None
        prev = np.inf
        for _ in range(config.max_escalations + 1):
            sig = _sigma_penalty(cfg)

            def objective(c, sig=sig):
                return weights_batch(c)[0] + sig(c)

            origin = random_fermion_entries(m, f, rng, transform) if state is None else state.point
            state = _descend(objective, origin, rng, cfg, transform)
            evals += state.evaluations
            if config.retract:
                break
            sigma = penalty_sigma(state.point, 1.0, 1.0)
            if sigma <= SIGMA_FEASIBLE and prev - state.value < 1e-9:
                break
            prev = state.value
            cfg = replace(cfg, L_norm=2 * cfg.L_norm, L_orth=2 * cfg.L_orth)
        res = _result(m, f, None, state.point, cfg, seed, evals, start)
        res.kappa = res.constraint_value
        if best is None or (res.feasible, -res.constraint_value) > (best.feasible, -best.constraint_value):
            best = res
    best.evaluations = evals
    best.wall_time = time.perf_counter() - start
    return best


def _minimize_target(m, f, kappa, config, pf, starts=()):
    _check_mf(m, f)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    start = time.perf_counter()
    transform = trace_rescale_batch if pf else (normalize_batch if config.retract else None)
    sig = (lambda c: 0.0) if pf else _sigma_penalty(config)
    best = None
    evals = 0
    origins = list(starts) + [None] * config.restarts
    for i, origin in enumerate(origins):
        seed = config.seed + i
        rng = np.random.default_rng(seed)
        point = random_fermion_entries(m, f, rng, transform) if origin is None else np.array(origin, dtype=complex)
        L_side = config.L_side
        delta0 = config.delta0 if origin is None else 1e-2
        for _ in range(config.max_escalations + 1):
            def objective(c, L_side=L_side):
                k_val, z_val = weights_batch(c)
                return z_val + L_side * np.abs(k_val - kappa) + sig(c)

            state = _descend(objective, point, rng, config, transform, delta0=delta0)
            evals += state.evaluations
            point = state.point
            res = _result(m, f, kappa, point, config, seed, evals, start, pf=pf)
            if res.feasible:
                break
            L_side *= 2.0
            delta0 = max(config.delta0 * 1e-2, config.delta_min * 10)
        if best is None or (res.feasible, -res.Z) > (best.feasible, -best.Z):
            best, best_objective, best_rng = res, objective, rng
    if config.polish_neighbors:
        state = _polish(best_objective, best.entries, best_rng, config, transform)
        evals += state.evaluations
        polished = _result(m, f, kappa, state.point, config, best.seed, evals, start, pf=pf)
        if (polished.feasible, -polished.Z) >= (best.feasible, -best.Z):
            best = polished
    best.evaluations = evals
    best.wall_time = time.perf_counter() - start
    return best


def minimize_Z(m: int, f: int, kappa: float, config: SearchConfig = SearchConfig(),
               starts=()) -> ConstrainedResult:
    """Minimize ``sum |A_xy^2| + L_side |sum |A_xy|^2 - kappa| + sigma`` over fermionic projectors.

    ``L_side`` doubles after a descent whose constraint residual exceeds
    ``1e-4``; a result that stays above it is flagged infeasible. ``starts``
    are extra initial fermion matrices searched before the random ones.
    """
    return _minimize_target(m, f, kappa, config, pf=False, starts=starts)


def minimize_Z_pf(m: int, f: int, kappa: float, config: SearchConfig = SearchConfig(),
                  warm_start: bool = True, projector_result: ConstrainedResult | None = None) -> ConstrainedResult:
    """Same target over the relaxed class ``P^f`` (negative-norm columns, ``Tr P = f``, no ``sigma``).

    With ``warm_start`` the projector-class minimizer (computed unless given)
    seeds the first search, so the relaxed minimum cannot come out larger.
    """
    starts = []
    if warm_start:
        projector_result = projector_result or minimize_Z(m, f, kappa, config)
        starts.append(projector_result.entries)
    return _minimize_target(m, f, kappa, config, pf=True, starts=starts)


@dataclass
class SweepRow:
    m: int
    f: int
    kappa: float
    Z: float
    constraint_residual: float
    feasible: bool
    seed: int
    evals: int
    Z_pf: float | None = None
    dominance: bool | None = None


def sweep(m: int, f: int, kappas, config: SearchConfig = SearchConfig(), pf: bool = False,
          progress: Callable[[SweepRow], None] | None = None,
          on_result: Callable[[ConstrainedResult], None] | None = None) -> list[SweepRow]:
    """Minimize ``Z`` on a grid of constraint values, optionally comparing with class ``P^f``.

    ``on_result`` receives each projector minimizer, ``progress`` each finished row.
    """
    rows = []
    for kappa in kappas:
        res = minimize_Z(m, f, float(kappa), config)
        if on_result is not None:
            on_result(res)
        row = SweepRow(m, f, float(kappa), res.Z, res.constraint_residual, res.feasible, res.seed, res.evaluations)
        if pf:
            rel = minimize_Z_pf(m, f, float(kappa), config, projector_result=res)
            row.Z_pf = rel.Z
            row.evals += rel.evaluations
            row.dominance = bool(rel.Z <= res.Z + 1e-6)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows
