"""Command-line front end.

Every subcommand reads an INI config (``--config``), runs one capability and
emits a table: CSV (comma separated, header row, LF endings) by default, or a
JSON document with the same columns and rows under ``--json``. With ``--out
DIR`` the table is written to ``DIR/<command>.csv`` (and ``<command>.json``
under ``--json``) instead of stdout.

Exit codes: 0 success, 2 validation error, 3 regime or feasibility failure,
4 agreement-gate failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    IFSError,
    MomentDiverges,
    NoFeasibleM,
    OrderTooLarge,
    RegimeViolation,
    ValidationError,
)
from .ifs import ProbabilisticIFS, spectral_report, tail_exponent
from .moments import exact_moment, finite_moment_orders
from .response import SCHEMES, regime_issues, response_check
from .sampler import (
    DEFAULT_TRUNCATION,
    ParamDirection,
    empirical_tail,
    estimate_expectation,
    sample_values,
)
from .testfunctions import CappedPolynomial, PowerMoment, SmoothBump, TestFunction
from .witness import detect_regime, divergence_report, family_to_json, median_r

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_REGIME = 3
EXIT_GATE = 4

COMMANDS = ("analyze", "moments", "response", "tail", "nondiff", "sample")

# section -> allowed keys; anything else in a config file is rejected
SCHEMA = {
    "ifs": {"ratios", "translations", "probs"},
    "run": {"seed", "replicas", "truncation"},
    "moments": {"max_order", "monte_carlo"},
    "response": {"phi", "orders", "steps", "direction", "scheme", "z"},
    "tail": {"thresholds"},
    "nondiff": {"n_min", "n_max", "regime", "condition", "median_replicas",
                "complement_replicas", "z", "witness_file"},
    "sample": {"count"},
}


class ConfigError(ValidationError):
    pass


class GateFailure(IFSError):
    pass


class RegimeFailure(IFSError):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    out = _floats(text)
    if any(v != int(v) for v in out):
        raise ConfigError(f"expected integers, got {text!r}")
    return [int(v) for v in out]


@dataclass
class RunConfig:
    """Validated contents of a config file."""

    ifs: ProbabilisticIFS
    seed: int = 0
    replicas: int = 100_000
    truncation: int = DEFAULT_TRUNCATION
    sections: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)


def parse_config(text: str) -> RunConfig:
    """Parse INI text; unknown sections or keys raise :class:`ConfigError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        keys = dict(parser.items(name))
        unknown = sorted(set(keys) - SCHEMA[name])
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
        sections[name] = keys
    if "ifs" not in sections or "ratios" not in sections["ifs"]:
        raise ConfigError("config needs [ifs] ratios")
    spec = sections["ifs"]
    ratios = _floats(spec["ratios"])
    trans = _floats(spec["translations"]) if "translations" in spec else None
    probs = _floats(spec["probs"]) if "probs" in spec else None
    ifs = ProbabilisticIFS.from_params(ratios, trans, probs)
    run = sections.get("run", {})
    cfg = RunConfig(ifs, sections=sections)
    if "seed" in run:
        cfg.seed = _ints(run["seed"])[0]
    if "replicas" in run:
        cfg.replicas = _ints(run["replicas"])[0]
    if "truncation" in run:
        cfg.truncation = _ints(run["truncation"])[0]
    if cfg.replicas < 2:
        raise ConfigError("replicas must be >= 2")
    if cfg.truncation < 1:
        raise ConfigError("truncation must be >= 1")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def parse_phi(text: str, ifs: ProbabilisticIFS) -> TestFunction:
    """``power:T``, ``bump:CENTER:INNER:OUTER`` or ``capped:R[:X0]``."""
    kind, *args = [s.strip() for s in text.split(":")]
    try:
        vals = [float(a) for a in args]
        if kind == "power" and len(vals) == 1:
            return PowerMoment(vals[0])
        if kind == "bump" and len(vals) == 3:
            return SmoothBump(*vals)
        if kind == "capped" and len(vals) in (1, 2) and vals[0] == int(vals[0]):
            if len(vals) == 1:
                return CappedPolynomial.for_ifs(ifs, int(vals[0]))
            return CappedPolynomial(int(vals[0]), vals[1])
    except ValueError as exc:
        raise ConfigError(f"bad test function {text!r}: {exc}") from exc
    raise ConfigError(f"bad test function {text!r}; use power:T, bump:C:I:O or capped:R[:X0]")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class Table:
    command: str
    columns: list[str]
    rows: list[list]
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, (float, np.floating)):
                v = float(v)
                return v if math.isfinite(v) else repr(v)
            if isinstance(v, np.integer):
                return int(v)
            return v

        doc = {
            "command": self.command,
            "columns": self.columns,
            "rows": [dict(zip(self.columns, (clean(v) for v in row))) for row in self.rows],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"


@dataclass
class Outcome:
    table: Table
    code: int = EXIT_OK
    message: str = ""
    extra_files: dict = field(default_factory=dict)


def cmd_analyze(cfg: RunConfig, threads: int = 1) -> Outcome:
    rep = spectral_report(cfg.ifs)
    regime = detect_regime(cfg.ifs)
    rows = [[k, v] for k, v in rep.to_dict().items()]
    rows.append(["finite_moment_orders", finite_moment_orders(cfg.ifs)])
    rows.append(["regime", regime.kind])
    return Outcome(Table("analyze", ["quantity", "value"], rows, {"ifs": cfg.ifs.to_dict()}))


def cmd_moments(cfg: RunConfig, threads: int = 1) -> Outcome:
    k_max = _ints(cfg.get("moments", "max_order", "2"))[0]
    mc = cfg.get("moments", "monte_carlo", "true").strip().lower() in ("1", "true", "yes")
    rows = []
    for k in range(1, k_max + 1):
        exact = exact_moment(cfg.ifs, k)
        mean = se = None
        if mc:
            est = estimate_expectation(cfg.ifs, lambda b, k=k: b.x**k, cfg.truncation,
                                       cfg.replicas, cfg.seed, threads)
            mean, se = est.mean, est.std_error
        rows.append([k, exact, mean, se])
    meta = {"ifs": cfg.ifs.to_dict(), "seed": cfg.seed, "replicas": cfg.replicas,
            "truncation": cfg.truncation}
    return Outcome(Table("moments", ["order", "exact", "mc_mean", "mc_se"], rows, meta))


RESPONSE_COLUMNS = ["order", "formula_mean", "formula_se", "fd_mean", "fd_se", "fd_step",
                    "verdict"]


def cmd_response(cfg: RunConfig, threads: int = 1) -> Outcome:
    phi = parse_phi(cfg.get("response", "phi", "power:2"), cfg.ifs)
    orders = _ints(cfg.get("response", "orders", "1"))
    steps = _floats(cfg.get("response", "steps", "1e-4"))
    try:
        direction = ParamDirection.parse(cfg.get("response", "direction", "ratio:1"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    direction.check(cfg.ifs)
    scheme = cfg.get("response", "scheme", "central-2point")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    z = _floats(cfg.get("response", "z", "4"))[0]
    issues = [msg for l in orders for msg in regime_issues(cfg.ifs, phi, l)]
    if issues:
        raise RegimeFailure("; ".join(dict.fromkeys(issues)))
    rows = []
    failed = False
    for l in orders:
        for step in steps:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RegimeViolation)
                res = response_check(cfg.ifs, phi, l, direction, step, scheme, None,
                                     cfg.replicas, cfg.seed, threads, z)
            fd = res.fd_value.estimate
            rows.append([l, res.formula_value.mean, res.formula_value.std_error, fd.mean,
                         fd.std_error, step, res.agreement.verdict])
            failed |= not res.agreement.passed
    meta = {"ifs": cfg.ifs.to_dict(), "phi": phi.to_dict(), "direction": str(direction),
            "scheme": scheme, "z": z, "seed": cfg.seed, "replicas": cfg.replicas}
    table = Table("response", RESPONSE_COLUMNS, rows, meta)
    if failed:
        return Outcome(table, EXIT_GATE, "agreement gate failed")
    return Outcome(table)


def cmd_tail(cfg: RunConfig, threads: int = 1) -> Outcome:
    thresholds = _floats(cfg.get("tail", "thresholds", "10,100,1000"))
    s0 = tail_exponent(cfg.ifs)
    points = empirical_tail(cfg.ifs, thresholds, cfg.truncation, cfg.replicas, cfg.seed, threads)
    rows = [[p.threshold, p.probability, p.std_error, p.count, p.probability * p.threshold**s0]
            for p in points]
    meta = {"ifs": cfg.ifs.to_dict(), "tail_exponent": s0, "seed": cfg.seed,
            "replicas": cfg.replicas, "truncation": cfg.truncation}
    columns = ["threshold", "probability", "std_error", "count", "scaled"]
    return Outcome(Table("tail", columns, rows, meta))


NONDIFF_COLUMNS = ["N", "h_prime", "h_prime_se", "lower_bound", "passed", "partial_sum",
                   "l1_norm", "l1_bound", "ball_probability", "ball_probability_se",
                   "ball_bound", "M_N", "p_N"]


def cmd_nondiff(cfg: RunConfig, threads: int = 1) -> Outcome:
    regime = detect_regime(cfg.ifs)
    if regime.kind == "None":
        raise RegimeFailure("regime None: neither non-differentiability construction applies")
    n_min = _ints(cfg.get("nondiff", "n_min", "8"))[0]
    n_max = _ints(cfg.get("nondiff", "n_max", str(n_min)))[0]
    which = cfg.get("nondiff", "regime", None)
    if which is not None and which not in ("A", "B"):
        raise ConfigError("nondiff regime must be A or B")
    condition = cfg.get("nondiff", "condition", "exact")
    if condition not in ("exact", "cramer"):
        raise ConfigError("nondiff condition must be exact or cramer")
    med = _ints(cfg.get("nondiff", "median_replicas", "1000000"))[0]
    comp = cfg.get("nondiff", "complement_replicas", None)
    comp = _ints(comp)[0] if comp is not None else None
    z = _floats(cfg.get("nondiff", "z", "4"))[0]
    r = median_r(cfg.ifs, med, cfg.seed)
    report = divergence_report(cfg.ifs, range(n_min, n_max + 1), cfg.replicas, cfg.seed,
                               which, z, condition, r, threads, comp)
    rows = [[getattr(row, c) for c in NONDIFF_COLUMNS] for row in report.rows]
    meta = {"ifs": cfg.ifs.to_dict(), "regime": report.regime, "parameters": report.parameters,
            "c": report.c, "r": report.r, "infeasible": list(report.infeasible),
            "l1_total": report.l1_total, "l1_bound_total": report.l1_bound_total,
            "seed": cfg.seed, "replicas": cfg.replicas}
    table = Table("nondiff", NONDIFF_COLUMNS, rows, meta)
    extra = {}
    name = cfg.get("nondiff", "witness_file", None)
    if name:
        extra[name] = family_to_json(cfg.ifs, regime, report.witnesses) + "\n"
    if not report.all_passed:
        return Outcome(table, EXIT_GATE, "lower bound not met", extra)
    return Outcome(table, extra_files=extra)


def cmd_sample(cfg: RunConfig, threads: int = 1) -> Outcome:
    count = _ints(cfg.get("sample", "count", "1000"))[0]
    x = sample_values(cfg.ifs, cfg.truncation, count, cfg.seed, threads)
    rows = [[i, v] for i, v in enumerate(x)]
    meta = {"ifs": cfg.ifs.to_dict(), "seed": cfg.seed, "truncation": cfg.truncation}
    return Outcome(Table("sample", ["replica", "x"], rows, meta))


HANDLERS = {
    "analyze": cmd_analyze,
    "moments": cmd_moments,
    "response": cmd_response,
    "tail": cmd_tail,
    "nondiff": cmd_nondiff,
    "sample": cmd_sample,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="INI run config")
    common.add_argument("--json", action="store_true", help="JSON on stdout, or an extra .json file with --out")
    common.add_argument("--out", metavar="DIR", help="write files into DIR")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads")
    common.add_argument("--seed", type=int, metavar="S", help="override the config seed")
    parser = argparse.ArgumentParser(prog="ifs-response",
                                     description="Stationary measures and linear response of "
                                                 "random affine maps.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HANDLERS[name].__doc__)
    return parser


def _emit(outcome: Outcome, args) -> None:
    table = outcome.table
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{table.command}.csv").write_bytes(table.to_csv().encode())
        if args.json:
            (out / f"{table.command}.json").write_bytes(table.to_json().encode())
        for name, text in outcome.extra_files.items():
            (out / name).write_bytes(text.encode())
    else:
        sys.stdout.write(table.to_json() if args.json else table.to_csv())


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        outcome = HANDLERS[args.command](cfg, args.threads)
    except (RegimeFailure, NoFeasibleM, MomentDiverges) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except (ValidationError, OrderTooLarge, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _emit(outcome, args)
    if outcome.message:
        print(f"error: {outcome.message}", file=sys.stderr)
    return outcome.code


def main() -> None:
    sys.exit(run())
