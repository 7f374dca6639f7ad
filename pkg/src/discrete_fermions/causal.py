"""Discrete causal structure: timelike, spacelike and boundary point pairs."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .algebra import ChainSpectrum, Operator, chain_invariants
from .config import DEFAULT_TOLERANCES


class CausalLabel(str, enum.Enum):
    TIMELIKE = "T"
    SPACELIKE = "S"
    BOUNDARY = "B"


def _label(trace: float, det: float, tol: float) -> CausalLabel:
    disc = trace * trace - 4.0 * det
    band = tol * (trace * trace + abs(4.0 * det) + 1.0)
    if disc > band:
        return CausalLabel.TIMELIKE
    if disc < -band:
        return CausalLabel.SPACELIKE
    return CausalLabel.BOUNDARY


def classify_pair(spec: ChainSpectrum, tol: float | None = None) -> CausalLabel:
    """Timelike for two real roots, spacelike for a conjugate pair, boundary in the tolerance band."""
    tol = DEFAULT_TOLERANCES.causal if tol is None else tol
    return _label(spec.trace, spec.det, tol)


@dataclass(frozen=True)
class CausalMatrix:
    labels: np.ndarray          # (m, m) array of CausalLabel
    discriminants: np.ndarray   # (m, m) Tr(A)^2 - 4 det(A)

    @property
    def m(self) -> int:
        return self.labels.shape[0]

    def codes(self) -> list[list[str]]:
        return [[lab.value for lab in row] for row in self.labels]

    def count(self, label: CausalLabel) -> int:
        return int(sum(lab is label for lab in self.labels.flat))

    def off_diagonal(self) -> set:
        m = self.m
        return {self.labels[i, j] for i in range(m) for j in range(m) if i != j}


def causal_matrix(P: Operator, tol: float | None = None) -> CausalMatrix:
    tol = DEFAULT_TOLERANCES.causal if tol is None else tol
    trace, det = chain_invariants(P)
    # A_xy and A_yx share their characteristic polynomial; symmetrize away rounding
    trace = 0.5 * (trace + trace.T)
    det = 0.5 * (det + det.T)
    m = trace.shape[0]
    labels = np.empty((m, m), dtype=object)
    for i in range(m):
        for j in range(m):
            labels[i, j] = _label(trace[i, j], det[i, j], tol)
    return CausalMatrix(labels, trace * trace - 4.0 * det)
