from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from discrete_fermions.algebra import FermionMatrix
from discrete_fermions.constrained import normalize_batch, random_fermion_entries

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

DERIVED = json.loads((Path(__file__).parent / "oracles" / "derived.json").read_text())


def exact(text: str) -> float:
    """Frozen oracle value written as a rational or a sqrt expression."""
    if "sqrt" in text:
        num, den = text.split("/")
        coeff, rad = num.split("sqrt(")
        c = float(coeff.rstrip("*")) if coeff else 1.0
        return c * np.sqrt(float(rad.rstrip(")"))) / float(den)
    return float(Fraction(text))


@pytest.fixture
def derived():
    return DERIVED


def random_system(m: int, f: int, seed: int) -> FermionMatrix:
    """Fermion matrix with entries drawn uniformly, normalized onto pseudo-orthonormal columns."""
    rng = np.random.default_rng(seed)
    raw = random_fermion_entries(m, f, rng, normalize_batch)
    return FermionMatrix(normalize_batch(raw[None])[0])


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion; the line is printed in the summary."""

    def record(number: int, checks: list[tuple[str, bool]]):
        failed = [name for name, ok in checks if not ok]
        detail = "; ".join(name for name, _ in checks) if not failed else "failed: " + "; ".join(failed)
        _CRITERIA[number] = (not failed, detail)
        line = f"criterion {number}: {'PASS' if not failed else 'FAIL'} ({detail})"
        print(line)
        assert not failed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
