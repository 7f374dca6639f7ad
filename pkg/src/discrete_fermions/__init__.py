"""Fermion systems in discrete space-time.

Submodules
----------
algebra
    Indefinite inner product spaces, fermion matrices, projectors, closed chains.
bloch
    Local correlation matrices and Bloch vectors for two particles.
causal
    Timelike, spacelike and boundary classification of point pairs.
closedform
    Analytic families and closed-form minima.
critical
    Penalty method with Fletcher-Reeves descent for the critical action.
constrained
    Derivative-free search for the constrained variational principle.
io
    File formats shared by the command line front end.
"""

from __future__ import annotations

__version__ = "0.1.0"
