"""Command line front end: ``critical``, ``constrained``, ``oracle`` and ``analyze``.

Exit status is 0 on success (including runs that did not converge, which are
flagged in the output tables), 1 on usage errors and 2 when an input fails
validation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import closedform as cf
from . import io
from .algebra import (
    ValidationError,
    action,
    constraint_value,
    local_traces,
    projector_from_fermion_matrix,
    target_value,
)
from .bloch import bloch_configuration, configuration_gram, gram_signature, reconstruct_fermion_matrix
from .causal import causal_matrix
from .constrained import SearchConfig, kappa_min, sweep
from .critical import CriticalProblem, OneParticleProblem, PenaltySchedule, default_restarts, multi_start

log = logging.getLogger("discrete_fermions")

OUTPUT_ENV = "DISCRETE_FERMIONS_OUTPUT"
FORMAT_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- configuration ------------------------------------------------------------


def _schedule_fields() -> tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(PenaltySchedule))


@dataclass
class CriticalConfig:
    m: int = 2
    f: int = 2
    mu: float = 0.5
    restarts: int | None = None
    seed: int = 0
    workers: int = 1
    schedule: dict = field(default_factory=dict)
    out: str | None = None

    def validate(self):
        if self.m < 1:
            raise UsageError("m must be at least 1")
        if self.f not in (1, 2):
            raise UsageError("critical runs support f = 1 or f = 2")
        if self.f == 2 and self.mu != 0.5:
            raise UsageError("two-particle runs minimize the critical action (mu = 0.5)")
        if self.f == 1 and self.mu >= 1 and self.m > 1:
            raise UsageError("the one-particle minimizer needs mu < 1 (constant at mu = 1, unbounded above)")
        if self.restarts is not None and self.restarts < 1:
            raise UsageError("restarts must be positive")
        if self.workers < 1:
            raise UsageError("workers must be positive")
        unknown = set(self.schedule) - set(_schedule_fields())
        if unknown:
            raise UsageError(f"unknown schedule keys: {sorted(unknown)}")


@dataclass
class ConstrainedConfig:
    m: int = 2
    f: int = 2
    kappa_min: bool = False
    kappa: list = field(default_factory=list)
    sweep: str | None = None
    pf: bool = False
    analyze: bool = False
    search: dict = field(default_factory=dict)
    out: str | None = None

    def validate(self):
        if self.m < 1 or self.f < 1:
            raise UsageError("m and f must be positive")
        if self.f > self.m:
            raise UsageError(f"f = {self.f} particles do not fit on m = {self.m} points")
        if not (self.kappa_min or self.kappa or self.sweep):
            raise UsageError("nothing to do: pass --kappa-min, --kappa or --sweep")
        unknown = set(self.search) - {f.name for f in dataclasses.fields(SearchConfig)}
        if unknown:
            raise UsageError(f"unknown search keys: {sorted(unknown)}")
        if self.sweep:
            parse_sweep(self.sweep)

    def kappas(self) -> list[float]:
        values = [float(k) for k in self.kappa]
        if self.sweep:
            values += parse_sweep(self.sweep)
        return values


CONFIG_TYPES = {"critical": CriticalConfig, "constrained": ConstrainedConfig}


def parse_sweep(text: str) -> list[float]:
    """``"a:b:n"`` as ``n`` equally spaced values from ``a`` to ``b``."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise UsageError(f"sweep must look like a:b:n, got {text!r}") from None
    if n < 1:
        raise UsageError("sweep needs at least one point")
    return [float(k) for k in np.linspace(a, b, n)]


def load_config(command: str, path: str | None, overrides: dict):
    """Defaults, then the JSON config file, then explicit flags."""
    cls = CONFIG_TYPES[command]
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        if data.pop("command", command) != command:
            raise UsageError(f"config file is not for the {command!r} command")
        version = data.pop("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise UsageError(f"unsupported config format_version {version}")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in ("schedule", "search"):
        if key in names:
            nested = dict(data.get(key, {}))
            nested.update(overrides.pop(key, {}))
            data[key] = nested
    data.update(overrides)
    unknown = set(data) - names
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = cls(**data)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    cfg.validate()
    return cfg


def output_dir(cfg_out: str | None, command: str) -> Path:
    if cfg_out:
        return Path(cfg_out)
    base = os.environ.get(OUTPUT_ENV)
    return Path(base) / command if base else Path("discrete-fermions-output") / command


def write_config(out: Path, command: str, resolved: dict) -> Path:
    return io.write_json(out / "config.json",
                         {"format_version": FORMAT_VERSION, "command": command, **resolved})


# -- critical -----------------------------------------------------------------


def cmd_critical(cfg: CriticalConfig) -> int:
    out = output_dir(cfg.out, "critical")
    if cfg.m == 1:
        value = cfg.f - cfg.mu * cfg.f ** 2
        print("m = 1: the only closed chain is P itself, so S = f - mu f^2 for every projector "
              "and the variational principle is trivial")
        print(f"action = {io.fmt(value)}")
        io._write_table(out / "results.csv", "results", io.RESULTS_COLUMNS,
                        [(1, 0, cfg.seed, value, True, 0)])
        write_config(out, "critical", {**asdict(cfg), "out": str(out)})
        return EXIT_OK

    problem = CriticalProblem(cfg.m) if cfg.f == 2 else OneParticleProblem(cfg.m, cfg.mu)
    schedule = dataclasses.replace(problem.default_schedule(), **cfg.schedule)
    restarts = cfg.restarts if cfg.restarts is not None else default_restarts(cfg.m)
    resolved = {**asdict(cfg), "restarts": restarts, "schedule": asdict(schedule), "out": str(out)}

    def progress(run):
        log.info("restart %d: action %s feasible %s (%d inner iterations)",
                 run.restart, io.fmt(run.action), run.feasible, run.inner_iterations)

    result = multi_start(cfg.m, restarts=restarts, seed=cfg.seed, schedule=schedule,
                         problem=problem, progress=progress, workers=cfg.workers)
    runs, best = result.runs, result.best

    io.write_results_csv(out / "results.csv", runs)
    io.write_run_log(out / "log.jsonl", runs)
    write_config(out, "critical", resolved)
    feasible = [r for r in runs if r.feasible]
    print(f"m = {cfg.m}, f = {cfg.f}: {len(feasible)}/{len(runs)} restarts feasible")
    print(f"best action = {io.fmt(best.action)} (restart {best.restart}, seed {best.seed})")
    if best.fermion_matrix is None:
        return EXIT_OK

    io.write_fermion_matrix(out / "best.json", best.fermion_matrix)
    P = projector_from_fermion_matrix(best.fermion_matrix, validate=False)
    cm = causal_matrix(P)
    io.write_causal_csv(out / "causal.csv", cm)
    io.write_causal_json(out / "causal.json", cm)
    if cfg.f == 2:
        io.write_bloch_csv(out / "bloch.csv", bloch_configuration(best.fermion_matrix))
        hits = [r for r in feasible if abs(r.action - best.action) <= 1e-6 and r.fermion_matrix is not None]
        signatures = {gram_signature(bloch_configuration(r.fermion_matrix), decimals=4) for r in hits}
        print(f"{len(hits)} restarts reach the best action; {len(signatures)} Gram-distinct Bloch configurations")
    print(f"outputs written to {out}")
    return EXIT_OK


# -- constrained --------------------------------------------------------------


def cmd_constrained(cfg: ConstrainedConfig) -> int:
    out = output_dir(cfg.out, "constrained")
    search = SearchConfig(**cfg.search)
    write_config(out, "constrained", {**asdict(cfg), "search": asdict(search), "out": str(out)})

    if cfg.kappa_min:
        res = kappa_min(cfg.m, cfg.f, search)
        print(f"kappa_min(m={cfg.m}, f={cfg.f}) = {io.fmt(res.constraint_value)}  "
              f"Z = {io.fmt(res.Z)}  projector = {res.is_projector}")
        io.write_json(out / "kappa-min.json", _jsonable(res.summary()))
        io.write_fermion_matrix(out / "kappa-min-psi.json", res.fermion_matrix)

    kappas = cfg.kappas()
    if not kappas:
        return EXIT_OK
    results = []
    rows = sweep(cfg.m, cfg.f, kappas, search, pf=cfg.pf, on_result=results.append,
                 progress=lambda r: log.info("kappa %s: Z %s", io.fmt(r.kappa), io.fmt(r.Z)))
    io.write_sweep_csv(out / "sweep.csv", rows, pf=cfg.pf)
    for row in rows:
        extra = f"  Z_pf = {io.fmt(row.Z_pf)}  dominance = {row.dominance}" if cfg.pf else ""
        print(f"kappa = {io.fmt(row.kappa)}  Z = {io.fmt(row.Z)}  feasible = {row.feasible}{extra}")
    if cfg.analyze:
        for i, res in enumerate(results):
            cm = causal_matrix(projector_from_fermion_matrix(res.fermion_matrix, validate=False))
            labels = sorted(lab.value for lab in cm.off_diagonal())
            print(f"kappa = {io.fmt(res.kappa)}: off-diagonal causal labels {','.join(labels)}")
            io.write_causal_csv(out / f"causal-{i}.csv", cm)
            io.write_fermion_matrix(out / f"psi-{i}.json", res.fermion_matrix)
    print(f"outputs written to {out}")
    return EXIT_OK


def _jsonable(d: dict) -> dict:
    return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in d.items()}


# -- oracle -------------------------------------------------------------------


def _oracle_two_point_critical(a):
    psi = cf.two_point_critical()
    return {"action": action(projector_from_fermion_matrix(psi), 0.5)}, psi


def _oracle_two_point_constrained(a):
    kappa = 2.0 if a.kappa is None else a.kappa
    opt = cf.two_point_constrained(kappa)
    values = {"kappa": kappa, "v": opt.v, "Z": opt.Z, "mu": opt.mu,
              "stationarity_residual": cf.two_point_stationarity_residual(kappa)}
    return values, opt.fermion_matrix(2)


def _oracle_three_point_family(a):
    theta = 0.0 if a.theta is None else a.theta
    v = cf.three_point_length(theta)
    return {"theta": theta, "v": v, "action": cf.three_point_action(v)}, cf.three_point_family(theta)


def _oracle_three_point_constrained(a):
    kappa = cf.THREE_POINT_KAPPA_SWITCH if a.kappa is None else a.kappa
    opt = cf.three_point_constrained(kappa, literal=a.literal)
    psi = opt.fermion_matrix(3)
    cm = causal_matrix(projector_from_fermion_matrix(psi))
    values = {"kappa": kappa, "v": opt.v, "Z": opt.Z,
              "off_diagonal": ",".join(sorted(lab.value for lab in cm.off_diagonal()))}
    if abs(kappa - cf.THREE_POINT_KAPPA_SWITCH) <= 1e-3:
        lower, upper = cf.three_point_branches_at_switch()
        values.update({"branch_switch": cf.THREE_POINT_KAPPA_SWITCH, "Z_timelike_branch": lower,
                       "Z_spacelike_branch": upper, "branch_gap": abs(upper - lower)})
    return values, psi


def _oracle_four_point_family(a):
    phi = 2 * np.pi / 3 if a.phi is None else a.phi
    psi = cf.four_point_family(phi)
    return {"phi": phi, "action": action(projector_from_fermion_matrix(psi), 0.5)}, psi


def _oracle_five_point_optimum(a):
    alpha = cf.five_point_optimum()
    psi = reconstruct_fermion_matrix(cf.five_point_bloch(alpha))
    return {"alpha": alpha, "alpha_cubic_root": cf.five_point_optimum_cubic(),
            "beta": cf.five_point_beta(alpha), "action": cf.five_point_action(alpha)}, psi


def _oracle_one_particle(a):
    m = 2 if a.m is None else a.m
    mu = 0.0 if a.mu is None else a.mu
    psi, value = cf.one_particle_minimizer(m, mu)
    return {"m": m, "mu": mu, "action": value}, psi


def _oracle_degenerate_three_point(a):
    alpha = 1.0 if a.alpha is None else a.alpha
    psi = cf.degenerate_three_point_family(alpha)
    config = bloch_configuration(psi)
    return {"alpha": alpha, "rho": config.rho.tolist(), "bloch": config.bloch.tolist()}, psi


def _oracle_divergence_witness(a):
    kind = a.kind or cf.WITNESS_KINDS[0]
    alpha = 1.0 if a.alpha is None else a.alpha
    mu = 1.0 if a.mu is None else a.mu
    psi, value = cf.divergence_witness(kind, alpha, mu, m=2 if a.m is None else a.m)
    return {"kind": kind, "alpha": alpha, "mu": mu, "action": value}, psi


ORACLES = {
    "two-point-critical": _oracle_two_point_critical,
    "two-point-constrained": _oracle_two_point_constrained,
    "three-point-family": _oracle_three_point_family,
    "three-point-constrained": _oracle_three_point_constrained,
    "four-point-family": _oracle_four_point_family,
    "five-point-optimum": _oracle_five_point_optimum,
    "one-particle": _oracle_one_particle,
    "degenerate-three-point": _oracle_degenerate_three_point,
    "divergence-witness": _oracle_divergence_witness,
}


def cmd_oracle(args) -> int:
    if args.name not in ORACLES:
        raise UsageError(f"unknown family {args.name!r}; available: {', '.join(ORACLES)}")
    try:
        values, psi = ORACLES[args.name](args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for key, value in values.items():
        shown = io.fmt(value) if isinstance(value, (int, float, np.floating)) else value
        print(f"{key} = {shown}")
    out = output_dir(args.out, "oracle")
    path = io.write_fermion_matrix(out / f"{args.name}.json", psi)
    print(f"fermion matrix written to {path}")
    return EXIT_OK


# -- analyze ------------------------------------------------------------------


def cmd_analyze(args) -> int:
    try:
        psi = io.read_fermion_matrix(args.file)
    except OSError as exc:
        raise UsageError(f"cannot read {args.file}: {exc}") from None
    except io.FormatError as exc:
        raise ValidationError(f"malformed fermion matrix file: {exc}") from None
    psi.validate(args.tol)
    P = projector_from_fermion_matrix(psi, validate=False)
    out = output_dir(args.out, "analyze")

    report = {
        "m": psi.m,
        "f": psi.f,
        "gram_deviation": float(np.max(np.abs(psi.gram() + np.eye(psi.f)))),
        "actions": {io.fmt(mu): action(P, mu) for mu in (0.0, 0.5, 1.0)},
        "constraint": constraint_value(P),
        "target": target_value(P),
        "local_traces": local_traces(P).tolist(),
    }
    cm = causal_matrix(P)
    report["causal"] = cm.codes()
    print(f"valid fermion matrix: m = {psi.m}, f = {psi.f}, "
          f"max Gram deviation {report['gram_deviation']:.3g}")
    for mu, value in report["actions"].items():
        print(f"S_{mu} = {io.fmt(value)}")
    print(f"constraint sum |A|^2 = {io.fmt(report['constraint'])}")
    print(f"target sum |A^2| = {io.fmt(report['target'])}")
    print("causal matrix:")
    for row in cm.codes():
        print("  " + " ".join(row))
    io.write_causal_csv(out / "causal.csv", cm)
    io.write_causal_json(out / "causal.json", cm)
    if psi.f == 2:
        config = bloch_configuration(psi)
        gram, _ = configuration_gram(config)
        report["bloch_gram"] = gram.tolist()
        io.write_bloch_csv(out / "bloch.csv", config)
        print("Bloch Gram matrix v_x . v_y:")
        for row in gram:
            print("  " + " ".join(f"{io.fmt(g):>14}" for g in row))
    io.write_json(out / "report.json", report)
    print(f"outputs written to {out}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _common(p: argparse.ArgumentParser, with_config: bool = True):
    if with_config:
        p.add_argument("--config", default=None, help="JSON config; explicit flags take precedence")
    p.add_argument("--out", default=argparse.SUPPRESS,
                   help=f"output directory (default: ${OUTPUT_ENV}/<command> or ./discrete-fermions-output/<command>)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="discrete-fermions", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    p = sub.add_parser("critical", help="multi-start minimization of the critical action")
    _common(p)
    p.add_argument("--m", type=int, default=S)
    p.add_argument("--f", type=int, default=S, help="1 or 2 particles (default 2)")
    p.add_argument("--mu", type=float, default=S, help="Lagrange multiplier for f = 1")
    p.add_argument("--restarts", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--workers", type=int, default=S)
    for name in _schedule_fields():
        kind = int if name in ("inner_max", "outer_max") else float
        p.add_argument(f"--{name.replace('_', '-')}", dest=f"schedule.{name}", type=kind, default=S,
                       metavar=name.upper())

    p = sub.add_parser("constrained", help="constrained variational principle")
    _common(p)
    p.add_argument("--m", type=int, default=S)
    p.add_argument("--f", type=int, default=S)
    p.add_argument("--kappa-min", dest="kappa_min", action="store_true", default=S)
    p.add_argument("--kappa", type=float, action="append", default=S)
    p.add_argument("--sweep", default=S, help="kappa grid a:b:n")
    p.add_argument("--pf", action="store_true", default=S, help="also minimize over class P^f")
    p.add_argument("--analyze", action="store_true", default=S, help="report causal labels of each minimizer")
    for f in dataclasses.fields(SearchConfig):
        flag = f"--{f.name.replace('_', '-')}"
        if f.name == "retract":
            p.add_argument("--no-retract", dest="search.retract", action="store_false", default=S,
                           help="penalize normalization instead of retracting candidates")
        else:
            kind = int if isinstance(f.default, int) else float
            p.add_argument(flag, dest=f"search.{f.name}", type=kind, default=S, metavar=f.name.upper())

    p = sub.add_parser("oracle", help="closed-form families")
    _common(p, with_config=False)
    p.add_argument("name", help=f"one of: {', '.join(ORACLES)}")
    for name, kind in (("kappa", float), ("theta", float), ("phi", float), ("alpha", float),
                       ("mu", float), ("m", int), ("kind", str)):
        p.add_argument(f"--{name}", type=kind, default=None)
    p.add_argument("--literal", action="store_true", help="alternative 8/81 coefficient above the switch")

    p = sub.add_parser("analyze", help="validate and analyze a stored fermion matrix")
    _common(p, with_config=False)
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=None, help="Gram tolerance")
    return parser


def _overrides(ns: argparse.Namespace) -> dict:
    out: dict = {}
    for key, value in vars(ns).items():
        if key in ("command", "config", "verbose"):
            continue
        if "." in key:
            group, name = key.split(".", 1)
            out.setdefault(group, {})[name] = value
        else:
            out[key] = value
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command in CONFIG_TYPES:
            cfg = load_config(args.command, args.config, _overrides(args))
            handler = cmd_critical if args.command == "critical" else cmd_constrained
            return handler(cfg)
        if not hasattr(args, "out"):
            args.out = None
        return cmd_oracle(args) if args.command == "oracle" else cmd_analyze(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
