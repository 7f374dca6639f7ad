"""Serialization of fermion matrices, Bloch data, causal matrices and run tables.

Every CSV starts with a ``# <schema> v<version>`` line followed by the column
header. Floats are rendered with 12 significant digits and point indices are
0-based.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .algebra import FermionMatrix
from .bloch import BlochConfiguration
from .causal import CausalMatrix

SCHEMA_VERSION = 1

RESULTS_COLUMNS = ("m", "restart", "seed", "action", "feasible", "iters")
BLOCH_COLUMNS = ("point", "rho", "vx", "vy", "vz")
SWEEP_COLUMNS = ("m", "f", "kappa", "Z", "constraint_residual", "feasible", "seed", "evals")
SWEEP_PF_COLUMNS = SWEEP_COLUMNS + ("Z_pf", "dominance")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def fmt(value) -> str:
    """Render one CSV cell: 12 significant digits for floats, lowercase booleans, strings verbatim."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x + 0.0, ".12g")


def schema_line(name: str) -> str:
    return f"# {name} v{SCHEMA_VERSION}"


def _write_table(path: Path, schema: str, columns: Iterable[str], rows: Iterable[Iterable]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(schema_line(schema) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_table(path) -> tuple[str, list[dict]]:
    """Schema tag and rows (as string dictionaries) of a CSV written by this module."""
    with Path(path).open() as fh:
        first = fh.readline().strip()
        if not first.startswith("# "):
            raise FormatError(f"{path}: missing schema line")
        rows = list(csv.DictReader(fh))
    return first[2:], rows


# -- fermion matrices ---------------------------------------------------------


def fermion_matrix_to_dict(psi: FermionMatrix) -> dict:
    a = psi.entries
    return {
        "m": psi.m,
        "f": psi.f,
        "entries": [[float(z.real) + 0.0, float(z.imag) + 0.0] for z in a.reshape(-1)],
    }


def fermion_matrix_from_dict(data) -> FermionMatrix:
    if not isinstance(data, dict):
        raise FormatError("fermion matrix must be a JSON object")
    missing = {"m", "f", "entries"} - set(data)
    if missing:
        raise FormatError(f"fermion matrix is missing keys: {sorted(missing)}")
    m, f = data["m"], data["f"]
    if not (isinstance(m, int) and isinstance(f, int)) or m < 1 or f < 1:
        raise FormatError("m and f must be positive integers")
    try:
        pairs = np.array(data["entries"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"entries must be [re, im] pairs: {exc}") from None
    if pairs.shape != (2 * m * f, 2):
        raise FormatError(f"expected {2 * m * f} [re, im] pairs, got array of shape {pairs.shape}")
    return FermionMatrix((pairs[:, 0] + 1j * pairs[:, 1]).reshape(2 * m, f))


def write_fermion_matrix(path, psi: FermionMatrix) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(fermion_matrix_to_dict(psi), indent=1) + "\n")
    return path


def read_fermion_matrix(path) -> FermionMatrix:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    return fermion_matrix_from_dict(data)


# -- Bloch and causal data ----------------------------------------------------


def write_bloch_csv(path, config: BlochConfiguration) -> Path:
    rows = ((x, config.rho[x], *config.bloch[x]) for x in range(config.m))
    return _write_table(path, "bloch", BLOCH_COLUMNS, rows)


def read_bloch_csv(path) -> BlochConfiguration:
    schema, rows = read_table(path)
    if not schema.startswith("bloch"):
        raise FormatError(f"{path}: expected a bloch table, got {schema!r}")
    rows = sorted(rows, key=lambda r: int(r["point"]))
    return BlochConfiguration([float(r["rho"]) for r in rows],
                              [[float(r[c]) for c in ("vx", "vy", "vz")] for r in rows])


def write_causal_csv(path, cm: CausalMatrix) -> Path:
    """Label matrix with a leading ``point`` column; the diagonal is included."""
    columns = ("point",) + tuple(str(y) for y in range(cm.m))
    rows = ((x, *row) for x, row in enumerate(cm.codes()))
    return _write_table(path, "causal", columns, rows)


def write_causal_json(path, cm: CausalMatrix) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "version": SCHEMA_VERSION,
        "labels": cm.codes(),
        "discriminants": [[float(fmt(d)) for d in row] for row in cm.discriminants],
    }
    path.write_text(json.dumps(data, indent=1) + "\n")
    return path


# -- optimizer tables ---------------------------------------------------------


def write_results_csv(path, runs) -> Path:
    rows = ((r.m, r.restart, r.seed, r.action, r.feasible, r.inner_iterations) for r in runs)
    return _write_table(path, "results", RESULTS_COLUMNS, rows)


def write_run_log(path, runs) -> Path:
    """One JSON record per outer iteration, tagged with its restart index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for run in runs:
            for rec in run.history:
                fh.write(json.dumps({"restart": run.restart, **rec}) + "\n")
    return path


def write_sweep_csv(path, rows, pf: bool = False) -> Path:
    columns = SWEEP_PF_COLUMNS if pf else SWEEP_COLUMNS

    def cells(r):
        base = (r.m, r.f, r.kappa, r.Z, r.constraint_residual, r.feasible, r.seed, r.evals)
        return base + ((r.Z_pf, r.dominance) if pf else ())

    return _write_table(path, "sweep", columns, (cells(r) for r in rows))


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    return path
