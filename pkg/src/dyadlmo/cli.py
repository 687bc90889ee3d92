"""Command-line interface: ``dyadlmo {transform,norm,para,commutator,experiment}``.

Exit codes: 0 success, 2 configuration / input error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as fio
from .dyadic import GridSignal, HaarExpansion, haar_forward, haar_inverse
from .norms import (
    bmo_norm,
    lmo_axis_norm,
    lmo_beta_norm,
    lmo_norm,
    product_bmo_norm,
    rect_bmo_norm,
)
from .opnorm import ConvergenceError

CSV_SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


# --- experiment configuration -----------------------------------------------

EXPERIMENTS = ("equivalence", "core", "cotlar", "growth", "commutator", "appendix", "shift_average")

DEFAULTS = {
    "experiment": "equivalence",
    "n_params": 2,
    "depths": [2, 3],
    "seed": 0,
    "budget": 8,
    "ensemble": 6,
    "samples": 1000,
    "out": "results",
}


@dataclass
class ExperimentConfig:
    experiment: str = DEFAULTS["experiment"]
    n_params: int = DEFAULTS["n_params"]
    depths: list = field(default_factory=lambda: list(DEFAULTS["depths"]))
    seed: int = DEFAULTS["seed"]
    budget: int = DEFAULTS["budget"]
    ensemble: int = DEFAULTS["ensemble"]
    samples: int = DEFAULTS["samples"]
    out: str = DEFAULTS["out"]

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"field {sorted(unknown)[0]!r}: unknown field")
        merged = {**DEFAULTS, **data}
        cfg = cls(**{k: merged[k] for k in DEFAULTS})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"field 'experiment': must be one of {', '.join(EXPERIMENTS)}")
        for name in ("n_params", "seed", "budget", "ensemble", "samples"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"field {name!r}: must be an integer")
        if not 1 <= self.n_params <= 3:
            raise ConfigError("field 'n_params': must be 1, 2 or 3")
        if self.seed < 0:
            raise ConfigError("field 'seed': must be >= 0")
        if self.budget < 1:
            raise ConfigError("field 'budget': must be >= 1")
        if self.ensemble < 0:
            raise ConfigError("field 'ensemble': must be >= 0")
        if self.samples < 1:
            raise ConfigError("field 'samples': must be >= 1")
        if (not isinstance(self.depths, list) or not self.depths
                or not all(isinstance(j, int) and not isinstance(j, bool) and 1 <= j <= 8
                           for j in self.depths)):
            raise ConfigError("field 'depths': must be a nonempty list of integers in [1, 8]")
        if not isinstance(self.out, str) or not self.out:
            raise ConfigError("field 'out': must be a nonempty path")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in DEFAULTS}

    def canonical(self) -> str:
        """Output-determining fields as canonical JSON (the output path is excluded)."""
        d = self.to_dict()
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


# --- records ---------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fio.fmt(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return float(fio.fmt(v)) if math.isfinite(v) else fio.fmt(v)
    return v


def rows_to_csv(columns: list[str], rows: list[dict], cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", "config_hash", "seed", *columns])
    for row in rows:
        w.writerow([CSV_SCHEMA_VERSION, cfg.config_hash, cfg.seed,
                    *[_cell(row.get(c, "")) for c in columns]])
    return buf.getvalue()


def _suite_table(report) -> tuple[list[str], list[dict]]:
    columns: list[str] = []
    for row in report.rows:
        for k in row:
            if k not in columns:
                columns.append(k)
    return columns, report.rows


def run_experiment(cfg: ExperimentConfig) -> tuple[str, dict]:
    """Run the configured experiment; returns (csv text, json summary)."""
    from . import opnorm

    depths = [int(j) for j in cfg.depths]
    summary: dict = {}
    if cfg.experiment == "equivalence":
        records = opnorm.equivalence_experiment(cfg.n_params, depths, cfg.ensemble, cfg.seed,
                                                cfg.budget)
        columns = ["depth", "symbol_id", "kind", "lmo_norm", "lower_bound", "ratio",
                   "witness_kind", "log_bound", "equiv_quantity"]
        rows = [{"depth": r.depth[0], "symbol_id": r.symbol_id, "kind": r.kind,
                 "lmo_norm": r.lmo_norm, "lower_bound": r.lower_bound, "ratio": r.ratio,
                 "witness_kind": r.witness_kind, "log_bound": r.log_bound,
                 "equiv_quantity": r.equiv_quantity} for r in records]
        for J in depths:
            ratios = [r.ratio for r in records if r.depth[0] == J and r.lower_bound > 0]
            summary[f"band_J{J}"] = [min(ratios), max(ratios)] if ratios else []
        summary["witnesses"] = [{"depth": r.depth[0], "symbol_id": r.symbol_id,
                                 "coeffs": r.witness.coeffs.ravel().tolist()} for r in records]
    elif cfg.experiment == "shift_average":
        from .shifts import monte_carlo_samples

        J = depths[0]
        x = (np.arange(2 ** J) + 0.5) / 2 ** J
        sig = GridSignal(np.cos(2 * np.pi * x))
        rows_arr, specs = monte_carlo_samples(sig, cfg.samples, cfg.seed)
        weight = np.sin(2 * np.pi * x) / 2 ** J
        columns = ["sample", "alpha", "r", "statistic"]
        rows = [{"sample": i, "alpha": "".join(map(str, s.alpha)), "r": s.r,
                 "statistic": float(v @ weight)} for i, (v, s) in enumerate(zip(rows_arr, specs))]
        summary["average"] = rows_arr.mean(axis=0).tolist()
    else:
        if cfg.experiment == "core":
            report = opnorm.core_lemma_suite(cfg.seed, depths, cfg.n_params, max(cfg.ensemble, 1))
        elif cfg.experiment == "cotlar":
            report = opnorm.cotlar_decay_suite(cfg.seed, depths, cfg.n_params, cfg.ensemble)
        elif cfg.experiment == "growth":
            report = opnorm.growth_lemma_suite(cfg.seed, depths, cfg.n_params, cfg.ensemble)
        elif cfg.experiment == "commutator":
            report = opnorm.commutator_bound_suite(cfg.seed, depths, cfg.ensemble)
        else:
            report = opnorm.appendix_suite(cfg.seed, max(cfg.ensemble, 1), depths[0])
        columns, rows = _suite_table(report)
        summary.update(report.summary)
        summary["failures"] = report.failures
    doc = {"schema_version": CSV_SCHEMA_VERSION, "config": cfg.to_dict(),
           "config_hash": cfg.config_hash, "summary": summary}
    return rows_to_csv(columns, rows, cfg), _jsonable(doc)


# --- subcommands ------------------------------------------------------------------


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _read_exp(path) -> HaarExpansion:
    obj = fio.read_any(path)
    return haar_forward(obj) if isinstance(obj, GridSignal) else obj


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_transform(args) -> int:
    obj = fio.read_any(args.input)
    if args.direction == "forward":
        if not isinstance(obj, GridSignal):
            raise fio.MalformedFileError("forward transform expects a signal file")
        res = haar_forward(obj)
        err = abs(obj.l2_norm() - res.norm2())
        text = fio.dumps_array(fio.COEFF_FORMAT, res.coeffs)
    else:
        if not isinstance(obj, HaarExpansion):
            raise fio.MalformedFileError("inverse transform expects a coefficient file")
        res = haar_inverse(obj)
        err = abs(res.l2_norm() - obj.norm2())
        text = fio.dumps_array(fio.SIGNAL_FORMAT, res.values)
    _emit(text, args.out)
    sys.stderr.write(f"parseval_error {fio.fmt(err)}\n")
    return EXIT_OK


def cmd_norm(args) -> int:
    exp = _read_exp(args.input)
    which = args.which
    if which == "bmo":
        rep = bmo_norm(haar_inverse(exp))
    elif which == "bmoP":
        rep = product_bmo_norm(exp)
    elif which == "rect":
        rep = rect_bmo_norm(exp)
    elif which == "lmo":
        rep = lmo_norm(exp)
    elif which == "lmoAxis":
        rep = lmo_axis_norm(exp, args.axis)
    else:
        delta = args.delta if args.delta is not None else [0] * exp.n_params
        rep = lmo_beta_norm(exp, delta)
    _emit(_norm_json(rep) + "\n", args.out)
    return EXIT_OK


def _norm_json(rep) -> str:
    d = json.loads(rep.to_json())
    d["value"] = float(fio.fmt(d["value"]))
    return json.dumps(d, sort_keys=True)


def cmd_para(args) -> int:
    from .paraproducts import PartitionSpec, delta_op, pi_beta, pi_main, pi_partition

    phi, b = _read_exp(args.phi), _read_exp(args.b)
    if args.kind == "main":
        out = pi_main(phi, b)
    elif args.kind == "delta":
        out = delta_op(phi, b)
    elif args.kind == "beta":
        if args.beta is None:
            raise ConfigError("--beta is required for kind 'beta'")
        out = pi_beta(phi, b, args.beta)
    else:
        if args.partition is None:
            raise ConfigError("--partition is required for kind 'partition'")
        blocks = [set(_ints(p)) for p in args.partition.split("/")]
        if len(blocks) != 3:
            raise ConfigError("--partition must look like '0/1/2'")
        out = pi_partition(phi, b, PartitionSpec(*blocks))
    _emit(fio.dumps_array(fio.COEFF_FORMAT, out.coeffs, out.truncated), args.out)
    return EXIT_OK


def cmd_commutator(args) -> int:
    from .shifts import iterated_commutator

    phi, b = _read_exp(args.phi), _read_exp(args.b)
    res = iterated_commutator(phi, b, args.axes)
    _emit(fio.dumps_array(fio.COEFF_FORMAT, res.output.coeffs, res.truncation_flag), args.out)
    sys.stderr.write(f"truncation_flag {int(res.truncation_flag)}\n")
    return EXIT_OK


def cmd_experiment(args) -> int:
    data = load_config(args.config) if args.config else {}
    overrides = {"n_params": args.n_params, "depths": args.depth, "seed": args.seed,
                 "budget": args.budget, "ensemble": args.ensemble, "out": args.out,
                 "experiment": args.name, "samples": args.samples}
    if isinstance(data, dict):
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    cfg = ExperimentConfig.from_dict(data)
    text, doc = run_experiment(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{cfg.experiment}.csv").write_text(text)
    (out / f"{cfg.experiment}.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyadlmo", description="Dyadic paraproduct and LMO toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("transform", help="forward/inverse Haar transform of a file")
    t.add_argument("input")
    t.add_argument("--direction", choices=("forward", "inverse"), default="forward")
    t.add_argument("--out")
    t.set_defaults(func=cmd_transform)

    n = sub.add_parser("norm", help="oscillation norms with witnesses (JSON)")
    n.add_argument("input")
    n.add_argument("--which", choices=("bmo", "bmoP", "lmo", "lmoAxis", "lmoBeta", "rect"),
                   default="bmoP")
    n.add_argument("--axis", type=int, default=0)
    n.add_argument("--delta", type=_ints)
    n.add_argument("--out")
    n.set_defaults(func=cmd_norm)

    a = sub.add_parser("para", help="apply a paraproduct-type operator")
    a.add_argument("phi")
    a.add_argument("b")
    a.add_argument("--kind", choices=("main", "beta", "delta", "partition"), default="main")
    a.add_argument("--beta", type=_ints)
    a.add_argument("--partition", help="axis blocks J1/J2/J3, e.g. 0/1/2")
    a.add_argument("--out")
    a.set_defaults(func=cmd_para)

    c = sub.add_parser("commutator", help="iterated shift commutator with multiplication")
    c.add_argument("phi")
    c.add_argument("b")
    c.add_argument("--axes", type=_ints, default=[0])
    c.add_argument("--out")
    c.set_defaults(func=cmd_commutator)

    e = sub.add_parser("experiment", help="run a configured experiment; writes CSV + JSON")
    e.add_argument("--config")
    e.add_argument("--name", choices=EXPERIMENTS)
    e.add_argument("--n-params", type=int)
    e.add_argument("--depth", type=_ints)
    e.add_argument("--seed", type=int)
    e.add_argument("--budget", type=int)
    e.add_argument("--ensemble", type=int)
    e.add_argument("--samples", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, fio.MalformedFileError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"input error: {exc.strerror}: {exc.filename}\n")
        return EXIT_CONFIG
    except (ConvergenceError, FloatingPointError) as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC
    except (ValueError, LookupError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except RuntimeError as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
