"""Command-line entry point: ``activereg <batch|iterative|validate|fit|report>``.

Exit codes: 0 on success, 1 on a domain error raised by the numerics,
2 on a usage error (bad flags, unreadable or invalid configuration).
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import penalties as pen
from . import validation as val
from .batch import combined_penalties, fixed_m_penalties, select_model
from .config import ScenarioConfig, config_digest, load_config
from .design import BasisFamily, DesignSpec, make_model
from .errors import ActiveRegError, ParseError, ValidationError
from .estimator import fit_full
from .io import read_csv_columns, sha256_file, write_csv, write_json
from .iterative import label_source, run as run_iterative
from .rng import stream
from .scenarios import CONFIGS, build_scenario

log = logging.getLogger("activereg")

SEED_ENV = "ACTIVEREG_SEED"


@dataclass
class RunReport:
    command: str
    config_digest: str
    outputs: dict = field(default_factory=dict)  # relative path -> sha256
    wall_time: float = 0.0
    versions: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "config_digest": self.config_digest, "outputs": self.outputs,
                "wall_time": self.wall_time, "versions": self.versions, "timings": self.timings}


class UsageError(Exception):
    pass


def _versions() -> dict:
    return {"activereg": __version__, "numpy": np.__version__, "python": platform.python_version()}


def resolve_config(args) -> tuple[ScenarioConfig, Path]:
    if args.config and args.scenario:
        raise UsageError("give either --config or --scenario, not both")
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        cfg, base = load_config(path), path.parent
    else:
        cfg, base = CONFIGS[args.scenario or "A"](), Path(".")
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            seed = int(env)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
        if not 0 <= seed < 2 ** 64:
            raise UsageError(f"{SEED_ENV} must fit in 64 bits")
        cfg = replace(cfg, run=replace(cfg.run, seed=seed))
    return cfg, base


class _Outputs:
    """Collects written files so the run report can list their digests."""

    def __init__(self, root: Path):
        self.root = root
        self.paths = []

    def json(self, name, obj):
        self.paths.append(write_json(self.root / name, obj))

    def csv(self, name, header, rows):
        self.paths.append(write_csv(self.root / name, header, rows))

    def digests(self) -> dict:
        return {str(p.relative_to(self.root)): sha256_file(p) for p in self.paths}


# --- subcommands -------------------------------------------------------------

def cmd_batch(args, cfg, base, out: _Outputs) -> dict:
    sc = build_scenario(cfg, base)
    if args.data:
        y = _read_labels(args.data, sc.design.n)
    else:
        y = sc.x0 + sc.noise.sample(stream(sc.seed, "batch-noise", args.replication), sc.n)
    res = select_model(sc.models, sc.collection, sc.design, y, sc.pcfg, sc.kraft, seed=sc.seed,
                       replication=args.replication, grams=sc.grams)
    summary = res.to_dict()
    summary["chosen_label"] = sc.models[res.chosen_m].label
    out.json("batch_result.json", summary)
    rows = []
    for m in sc.models:
        fixed = fixed_m_penalties(m, sc.collection, sc.n, sc.pcfg, sc.kraft)
        comb = combined_penalties(m, sc.collection, sc.n, sc.pcfg, sc.kraft)
        for s, a, b in zip(sc.collection, fixed, comb):
            rows.append((m.label, m.dim, s.k, s.name, s.p_min, float(s.probs.sum()),
                         pen.pen0(m, s.k, sc.n, sc.pcfg, s.p_min), pen.pen1_ms(m, s.k, sc.n, sc.pcfg, s.p_min),
                         pen.pen2_ms(m, s.k, sc.n, sc.pcfg, sc.kraft), b, a))
    out.csv("batch_penalties.csv", ("model", "dim", "k", "scheme", "p_min", "expected_labels", "pen0",
                                    "pen1", "pen2", "combined", "fixed_model"), rows)
    out.csv("batch_fitted.csv", ("t", "y", "fitted"),
            zip(sc.design.points, y, res.estimate.fitted))
    print(f"chosen model {summary['chosen_label']} (k per model: {res.chosen_k_per_model}), "
          f"penalized loss {res.penalized_loss:.6g}")
    return {}


def cmd_iterative(args, cfg, base, out: _Outputs) -> dict:
    sc = build_scenario(cfg, base)
    if sc.iterative is None:
        raise ValidationError("iterative", "the configuration has no [iterative] section")
    if args.data:
        y = _read_labels(args.data, sc.design.n)
    else:
        y = sc.x0 + sc.noise.sample(stream(sc.seed, "iter-noise", args.replication), sc.n)
    state, est = run_iterative(sc.design, label_source(y), sc.iterative, sc.pcfg,
                               stream(sc.seed, "iter", args.replication))
    rows = state.trace_rows()
    header = tuple(rows[0].keys()) if rows else ("j",)
    out.csv("iterative_trace.csv", header, [tuple(r[h] for h in header) for r in rows])
    out.json("iterative_summary.json", {
        "labels_used": state.labels_used, "steps": state.j, "sum_p": float(np.sum(state.p_trace)),
        "final_delta": state.deltas[-1], "coefficients": est.coefficients, "sigma2_plugin": state.sigma2_plugin,
    })
    print(f"{state.j} steps, {state.labels_used} labels used, final slack {state.deltas[-1]:.6g}")
    return {}


def cmd_validate(args, cfg, base, out: _Outputs) -> dict:
    ids = list(val.BOUND_IDS) if args.bound == "all" else [args.bound]
    if args.bound != "all" and args.bound not in val.BOUND_IDS:
        raise UsageError(f"unknown bound {args.bound!r}; choose from {', '.join(val.BOUND_IDS)} or all")
    if args.replications is not None and args.replications < 100:
        raise UsageError("--replications must be >= 100")
    explicit = args.config is not None or args.scenario is not None
    built = {}
    report = val.ValidationReport()
    for bid in ids:
        name, reps = val.DEFAULT_PLAN[bid]
        if explicit:
            key = "given"
            if key not in built:
                built[key] = build_scenario(cfg, base)
        else:
            key = name
            if key not in built:
                c = CONFIGS[name]()
                if SEED_ENV in os.environ:
                    c = replace(c, run=replace(c.run, seed=cfg.run.seed))
                built[key] = build_scenario(c)
        spec = val.BoundCheckSpec(bid, built[key], replications=args.replications or reps,
                                  workers=args.workers)
        report.entries.extend(val.run_check(spec))
    out.json("validation_report.json", report.to_dict())
    if args.per_rep_csv:
        rows = [(e.label, r, s) for e in report.entries for r, s in enumerate(e.stats)
                if not isinstance(s, (tuple, dict))]
        out.csv("validation_stats.csv", ("check", "replication", "statistic"), rows)
    for line in report.lines():
        print(line)
    args.failed = not report.passed()
    return {"checks": report.wall_times()}


def cmd_fit(args, cfg, base, out: _Outputs) -> dict:
    if not args.data:
        raise UsageError("fit needs --data CSV with columns t,y")
    cols = read_csv_columns(args.data, ("t", "y"))
    d = cfg.design
    q = cols.get("q", np.full(cols["t"].size, d.density))
    design = DesignSpec(points=cols["t"], q_values=q, Q=float(q.max()) if d.Q is None else d.Q,
                        basis=BasisFamily(d.family, resolution=d.resolution, degree=d.degree))
    fitted = []
    for name, idx in cfg.models:
        model = make_model(design, idx, label=name)
        est = fit_full(design, model, cols["y"])
        out.csv(f"fit_{name}.csv", ("index", "coefficient"), zip(model.index_set, est.coefficients))
        fitted.append(est.fitted)
    names = [name for name, _ in cfg.models]
    out.csv("fit_fitted.csv", ("t", "y", *names), zip(cols["t"], cols["y"], *fitted))
    print(f"fitted {len(names)} model(s) to {design.n} points")
    return {}


def cmd_report(args, cfg, base, out: _Outputs) -> dict:
    import json

    if not args.input:
        raise UsageError("report needs at least one --input validation_report.json")
    rows = []
    for path in args.input:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if "bounds" not in data:
            raise UsageError(f"{path} is not a validation report")
        for b in data["bounds"]:
            for c in b["checks"]:
                rows.append((b["bound_id"], c["label"], c["replications"], c["exceedances"], c["frequency"],
                             c["wilson_high"], c["nominal"], c["rule"], "pass" if c["passed"] else "fail"))
    out.csv("report.csv", ("bound_id", "check", "replications", "exceedances", "frequency",
                           "wilson_high", "nominal", "rule", "verdict"), rows)
    for r in rows:
        print(f"{r[8].upper():4s} {r[1]}: {r[4]:.4f} (upper {r[5]:.4f}) vs {r[6]:.4g}")
    return {}


def _read_labels(path, n: int) -> np.ndarray:
    y = read_csv_columns(path, ("y",))["y"]
    if y.size != n:
        raise ValidationError("data", f"expected {n} labels, found {y.size}")
    return y


COMMANDS = {"batch": cmd_batch, "iterative": cmd_iterative, "validate": cmd_validate,
            "fit": cmd_fit, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("scenario")
    src.add_argument("--config", help="scenario configuration file")
    src.add_argument("--scenario", choices=sorted(CONFIGS), help="built-in scenario (default A)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes (default: available CPUs)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="activereg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("batch", parents=[common], help="select schemes and a model on one sample")
    p.add_argument("--data", help="CSV with a y column (one label per design point); default: simulate")
    p.add_argument("--replication", type=int, default=0, help="replication index for simulated draws")

    p = sub.add_parser("iterative", parents=[common], help="run the sequential sampler once")
    p.add_argument("--data", help="CSV with a y column; default: simulate")
    p.add_argument("--replication", type=int, default=0)

    p = sub.add_parser("validate", parents=[common], help="Monte Carlo checks of the probability bounds")
    p.add_argument("--bound", default="all", help=f"one of {', '.join(val.BOUND_IDS)} or all")
    p.add_argument("--replications", type=int, help="override the replication count (>= 100)")
    p.add_argument("--per-rep-csv", action="store_true", help="also write per-replication statistics")
    p.add_argument("--strict", action="store_true", help="exit 1 if any check fails")

    p = sub.add_parser("fit", parents=[common], help="full-sample least-squares fit of each model")
    p.add_argument("--data", help="CSV with columns t,y (and optionally q)")

    p = sub.add_parser("report", parents=[common], help="tabulate validation reports")
    p.add_argument("--input", action="append", help="validation_report.json (repeatable)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        cfg, base = resolve_config(args)
        out = _Outputs(Path(args.out))
        timings = COMMANDS[args.command](args, cfg, base, out)
        report = RunReport(command=args.command, config_digest=config_digest(cfg), outputs=out.digests(),
                           wall_time=time.perf_counter() - start, versions=_versions(), timings=timings)
        write_json(out.root / "run_report.json", report.to_dict())
    except (UsageError, ParseError, ValidationError, OSError) as exc:
        print(f"activereg: error: {exc}", file=sys.stderr)
        return 2
    except (ActiveRegError, ValueError, ArithmeticError) as exc:
        print(f"activereg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if getattr(args, "strict", False) and getattr(args, "failed", False):
        return 1
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
