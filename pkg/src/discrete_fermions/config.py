"""Numerical tolerances shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    gram: float = 1e-10            # column pseudo-orthonormality of a fermion matrix
    idempotent: float = 1e-9       # P^2 = P, elementwise
    self_adjoint: float = 1e-10    # (PS)^dagger = PS
    pseudo_unitary: float = 1e-10  # U^dagger S U = S
    outer_symmetry: float = 1e-9
    root_sign: float = 1e-9        # lambda_+ lambda_- >= -tol for two particles
    causal: float = 1e-9           # relative discriminant band for Boundary
    bloch: float = 1e-9            # sum rules and |v| >= rho


DEFAULT_TOLERANCES = Tolerances()
