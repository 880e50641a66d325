"""Command-line entry point: ``closvote {simulate,sweep,theory,report,solve}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path as FsPath

from .experiments.config import PRESETS, ConfigError, ExperimentConfig
from .experiments.plot import render_svg
from .experiments.runner import read_plotdata, run_experiment, run_solver
from .routing import RoutingError, RoutingMatrix
from .theory import bound_report
from .topology import ClosParams, TopologyError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3

_THEORY_KEYS = {"t_max", "k", "p_b", "p_g", "c_l", "c_u", "N"}


def _run(args, require_sweep: bool) -> int:
    cfg = ExperimentConfig.load(args.config)
    if require_sweep and cfg.sweep is None:
        raise ConfigError("sweep", "the sweep command needs a 'sweep' section")
    if not require_sweep and cfg.sweep is not None:
        cfg = replace(cfg, sweep=None)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = FsPath(args.out or cfg.output)
    report = run_experiment(cfg, out)
    for x, series, mean, ci in report.summary:
        print(f"x={x:g}\t{series}\t{mean:.4f} ± {ci:.4f}")
    print(f"wrote {out}")
    if report.budget_exhausted:
        print("solver budget exceeded at every point", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def _theory(args) -> int:
    try:
        data = json.loads(FsPath(args.params).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("--params", str(exc)) from None
    if not isinstance(data, dict):
        raise ConfigError("--params", "expected a JSON object")
    topo = dict(PRESETS[data.pop("preset")]) if "preset" in data else {}
    topo.update(data.pop("topology", {}))
    extra = {k: data.pop(k) for k in list(data) if k in _THEORY_KEYS}
    topo.update(data)
    try:
        params = ClosParams.from_dict(topo)
    except TopologyError as exc:
        raise ConfigError("topology", str(exc)) from None
    print(json.dumps(bound_report(params, **extra).to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _report(args) -> int:
    src = FsPath(args.input)
    plot = src / "plotdata.csv"
    if not plot.exists():
        raise ConfigError("--in", f"{plot} not found")
    rows = read_plotdata(plot)
    (src / "chart.svg").write_text(render_svg(rows, title=src.name))
    for x, series, mean, ci in rows:
        print(f"x={x:g}\t{series}\t{mean:.4f} ± {ci:.4f}")
    return EXIT_OK


def _solve(args) -> int:
    try:
        matrix = RoutingMatrix.from_triplet_csv(args.matrix, args.links)
    except (OSError, RoutingError, KeyError, ValueError) as exc:
        raise ConfigError("--matrix", str(exc)) from None
    out = {}
    exceeded = False
    for name in args.engine:
        sol = run_solver(name, matrix, args.node_limit)
        exceeded |= sol.budget_exceeded
        out[name] = sol.to_dict()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_BUDGET if exceeded else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="closvote", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run one configuration"), ("sweep", "run a parameter sweep")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
    p = sub.add_parser("theory", help="print closed-form bounds as JSON")
    p.add_argument("--params", required=True)
    p = sub.add_parser("report", help="re-render the chart from plotdata.csv")
    p.add_argument("--in", dest="input", required=True)
    p = sub.add_parser("solve", help="run set-cover engines on a routing matrix CSV")
    p.add_argument("--matrix", required=True)
    p.add_argument("--links", type=int, help="number of links (default: max id + 1)")
    p.add_argument("--engine", action="append", choices=["greedy", "exact_binary", "exact_integer"])
    p.add_argument("--node-limit", type=int, default=1_000_000)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _run(args, require_sweep=False)
        if args.command == "sweep":
            return _run(args, require_sweep=True)
        if args.command == "theory":
            return _theory(args)
        if args.command == "report":
            return _report(args)
        if args.engine is None:
            args.engine = ["greedy", "exact_binary", "exact_integer"]
        return _solve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
