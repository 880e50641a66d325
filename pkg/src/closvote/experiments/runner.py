"""Sweep execution: seeding, the worker pool, engines and output files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path as FsPath

import numpy as np

from ..routing import PAD, RoutingMatrix
from ..simulator import (
    SinglePodWarning,
    account_icmp,
    draw_scenario,
    ground_truth,
    run_epoch,
    traceroute_budget,
)
from ..solvers import CoverSolution, exact_binary, exact_integer, greedy_cover
from ..topology import ClosParams, Topology, build_topology
from ..voting import algorithm1, blame_flows, rank_links, tally_votes
from .config import ExperimentConfig
from .metrics import EngineOutput, EpochScore, normal_ci, score_epoch
from .plot import render_svg

WORKERS_ENV = "CLOSVOTE_WORKERS"

METRICS_HEADER = ["point", "x", "trial", "engine", "accuracy", "accuracy_flagged_class",
                  "precision", "recall", "scored_flows", "flagged_class_flows",
                  "empty_flag_epochs", "k", "max_icmp_rate", "budget_exceeded"]
PLOT_METRICS = ("accuracy", "precision", "recall")


def _num(v: float) -> str:
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return format(float(v), ".10g")


@lru_cache(maxsize=8)
def _topology(params: ClosParams) -> Topology:
    return build_topology(params)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def trial_seeds(seed: int, n_points: int, n_trials: int) -> list[list[np.random.SeedSequence]]:
    """Independent streams per (point, trial), independent of worker count."""
    root = np.random.SeedSequence(seed)
    return [p.spawn(n_trials) for p in root.spawn(n_points)]


# ---------------------------------------------------------------------------
# engines


def _path_argmin(paths: np.ndarray, position: np.ndarray) -> np.ndarray:
    """Per row, the link with the smallest ``position`` (-1 when none ranked)."""
    if paths.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    big = np.iinfo(np.int64).max
    pos = np.where(paths != PAD, position[np.maximum(paths, 0)], big)
    best = np.argmin(pos, axis=1)
    blamed = paths[np.arange(paths.shape[0]), best]
    return np.where(pos.min(axis=1) == big, PAD, blamed)


def _solution_order(name: str, sol: CoverSolution, matrix: RoutingMatrix) -> list[int]:
    if name == "greedy":
        return list(sol.links)
    if name == "exact_integer":
        return sol.ranking()
    # exact binary: cover links by the number of failed flows they explain
    failed = matrix.A[matrix.failed_rows()]
    coverage = np.asarray(failed.sum(axis=0)).ravel()
    return sorted(sol.links, key=lambda l: (-int(coverage[l]), l))


def run_solver(name: str, matrix: RoutingMatrix, node_limit: int) -> CoverSolution:
    if name == "greedy":
        return greedy_cover(matrix)
    if name == "exact_binary":
        return exact_binary(matrix, node_limit=node_limit)
    if name == "exact_integer":
        return exact_integer(matrix, node_limit=node_limit)
    raise ValueError(f"unknown solver {name!r}")


# ---------------------------------------------------------------------------
# one trial


@dataclass
class TrialResult:
    point: int
    x: float
    trial: int
    k: int
    scores: dict[str, list[EpochScore]] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)
    exceeded: dict[str, bool] = field(default_factory=dict)
    max_icmp: float = 0.0
    votes: list[tuple] = field(default_factory=list)
    blame: list[tuple] = field(default_factory=list)
    solutions: list[dict] = field(default_factory=list)
    flows_csv: str = ""
    icmp_csv: str = ""


def run_trial(cfg: ExperimentConfig, seed: np.random.SeedSequence, point: int, x: float,
              trial: int) -> TrialResult:
    """Draw one failure scenario and simulate ``cfg.epochs`` epochs against it."""
    rng = np.random.default_rng(seed)
    topo = _topology(cfg.params)
    sc = cfg.scenario
    scenario = draw_scenario(topo, rng, k=sc.k, failed_rate=sc.failed_rate, good_rate=sc.good_rate,
                             placement=sc.placement, levels=sc.levels, links=sc.links,
                             lead_rate=sc.lead_rate, shared_rate=sc.shared_rate)
    budget = cfg.budget
    if budget == "theorem":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SinglePodWarning)
            budget = traceroute_budget(cfg.params, cfg.t_max)
    result = TrialResult(point, x, trial, scenario.k)
    for e in cfg.engines:
        result.scores[e] = []
        result.seconds[e] = 0.0
        result.exceeded[e] = False
    flows_buf, icmp_buf = io.StringIO(), io.StringIO()

    for epoch in range(cfg.epochs):
        trace = run_epoch(topo, scenario, cfg.traffic, rng, epoch=epoch, budget=budget,
                          epoch_seconds=cfg.epoch_seconds)
        truth = ground_truth(trace)
        result.max_icmp = max(result.max_icmp, account_icmp(trace, cfg.t_max).max_rate)
        voters = trace.voting_flows()
        outputs: dict[str, EngineOutput] = {}

        if "voting" in cfg.engines:
            t0 = time.perf_counter()
            tally = tally_votes(trace)
            ranking = rank_links(tally)
            bad = algorithm1(tally, topo, cfg.threshold, trace=trace, mode=cfg.adjust_mode,
                             denominator=cfg.denominator)
            blamed = blame_flows(trace, ranking, voters)
            result.seconds["voting"] += time.perf_counter() - t0
            outputs["voting"] = EngineOutput(voters, blamed, bad.links)
            for link, v in tally.as_dict().items():
                result.votes.append((point, trial, epoch, link, v))

        solvers = [e for e in cfg.engines if e != "voting"]
        if solvers:
            matrix = RoutingMatrix.from_paths(trace.paths[voters], trace.total_drops[voters],
                                              topo.n_links)
            for name in solvers:
                t0 = time.perf_counter()
                sol = run_solver(name, matrix, cfg.node_limit)
                position = np.full(topo.n_links, np.iinfo(np.int64).max - 1, dtype=np.int64)
                order = _solution_order(name, sol, matrix)
                position[order] = np.arange(len(order))
                blamed = _path_argmin(trace.paths[voters], position)
                result.seconds[name] += time.perf_counter() - t0
                result.exceeded[name] |= sol.budget_exceeded
                outputs[name] = EngineOutput(voters, blamed, tuple(sol.links))
                result.solutions.append({"point": point, "trial": trial, "epoch": epoch,
                                         "engine": name, **sol.to_dict()})

        for name, s in score_epoch(trace, outputs, truth, scenario.failed).items():
            result.scores[name].append(s)

        gt_class = dict(zip(truth.flows.tolist(), np.where(truth.noise, "noise", "failure").tolist()))
        for name in cfg.engines:
            o = outputs[name]
            for f, b in zip(o.flows.tolist(), o.blamed.tolist()):
                result.blame.append((point, trial, epoch, name, f, b, int(trace.culprit[f]),
                                     gt_class.get(f, "none")))
        if cfg.write_flows:
            trace.write_flows_csv(flows_buf, prefix=(point, trial, epoch), header=False)
            trace.write_icmp_csv(icmp_buf, prefix=(point, trial, epoch), header=False)

    result.flows_csv = flows_buf.getvalue()
    result.icmp_csv = icmp_buf.getvalue()
    return result


def _trial_job(args):
    return run_trial(*args)


# ---------------------------------------------------------------------------
# aggregate


@dataclass
class MetricsReport:
    """Trial-level metric rows plus per-point means and 95% intervals."""

    rows: list[dict]
    summary: list[tuple[float, str, float, float]]
    timings: list[tuple]
    budget_exceeded_points: tuple[int, ...]
    n_points: int

    def mean(self, engine: str, metric: str, point: int | None = None) -> float:
        vals = [r[metric] for r in self.rows
                if r["engine"] == engine and (point is None or r["point"] == point)]
        return normal_ci(vals)[0]

    @property
    def budget_exhausted(self) -> bool:
        """Every sweep point hit a solver budget."""
        return self.n_points > 0 and len(self.budget_exceeded_points) == self.n_points


def _trial_rows(r: TrialResult) -> list[dict]:
    rows = []
    for engine, scores in r.scores.items():
        scored = sum(s.scored for s in scores)
        scored_f = sum(s.scored_flagged for s in scores)
        rows.append({
            "point": r.point, "x": r.x, "trial": r.trial, "engine": engine,
            "accuracy": sum(s.correct for s in scores) / scored if scored else math.nan,
            "accuracy_flagged_class": sum(s.correct_flagged for s in scores) / scored_f if scored_f else math.nan,
            "precision": float(np.mean([s.precision for s in scores])),
            "recall": float(np.mean([s.recall for s in scores])),
            "scored_flows": scored, "flagged_class_flows": scored_f,
            "empty_flag_epochs": sum(s.precision_undefined for s in scores),
            "k": r.k, "max_icmp_rate": r.max_icmp,
            "budget_exceeded": int(r.exceeded[engine]),
        })
    return rows


def run_experiment(cfg: ExperimentConfig, out_dir: str | FsPath | None = None,
                   workers: int | None = None) -> MetricsReport:
    """Run every (point, trial), then write outputs in (point, trial) order.

    Outputs are identical for any worker count.
    """
    points = cfg.points()
    seeds = trial_seeds(cfg.seed, len(points), cfg.trials)
    jobs = [(pcfg, seeds[p][t], p, x, t) for p, (x, pcfg) in enumerate(points)
            for t in range(cfg.trials)]
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(jobs) == 1:
        results = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    results.sort(key=lambda r: (r.point, r.trial))

    rows = [row for r in results for row in _trial_rows(r)]
    summary = []
    for p, (x, _) in enumerate(points):
        for engine in cfg.engines:
            for metric in PLOT_METRICS:
                vals = [row[metric] for row in rows if row["point"] == p and row["engine"] == engine]
                mean, ci, _ = normal_ci(vals)
                summary.append((x, f"{engine}.{metric}", mean, ci))
    timings = [(r.point, r.trial, e, r.seconds[e]) for r in results for e in cfg.engines]
    exact = {"exact_binary", "exact_integer"} & set(cfg.engines)
    exceeded = tuple(sorted({r.point for r in results if any(r.exceeded[e] for e in exact)}))
    report = MetricsReport(rows, summary, timings, exceeded, len(points))
    if out_dir is not None:
        write_outputs(cfg, results, report, FsPath(out_dir))
    return report


# ---------------------------------------------------------------------------
# files


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_outputs(cfg: ExperimentConfig, results: list[TrialResult], report: MetricsReport,
                  out: FsPath) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(METRICS_HEADER)
        for row in report.rows:
            w.writerow([row[c] if isinstance(row[c], (int, str)) else _num(row[c])
                        for c in METRICS_HEADER])
    with open(out / "timings.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["point", "trial", "engine", "seconds"])
        for p, t, e, s in report.timings:
            w.writerow([p, t, e, _num(s)])
    with open(out / "votes.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["point", "trial", "epoch", "link", "votes"])
        for r in results:
            for p, t, e, link, v in r.votes:
                w.writerow([p, t, e, link, _num(v)])
    with open(out / "blame.csv", "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["point", "trial", "epoch", "engine", "flow_id", "blamed_link",
                    "culprit_link", "truth_class"])
        for r in results:
            w.writerows(r.blame)
    with open(out / "solutions.json", "w") as fh:
        json.dump([s for r in results for s in r.solutions], fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_plotdata(report.summary, out / "plotdata.csv")
    (out / "chart.svg").write_text(render_svg(report.summary, title=_title(cfg)))
    with open(out / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    if cfg.write_flows:
        with open(out / "flows.csv", "w", newline="") as fh:
            _writer(fh).writerow(["point", "trial", "epoch", "flow_id", "src", "dst", "h",
                                  "packets", "drops", "retransmitted", "culprit_link", "traced"])
            for r in results:
                fh.write(r.flows_csv)
        with open(out / "icmp.csv", "w", newline="") as fh:
            _writer(fh).writerow(["point", "trial", "epoch", "switch_id", "rate"])
            for r in results:
                fh.write(r.icmp_csv)


def _title(cfg: ExperimentConfig) -> str:
    return cfg.name if cfg.sweep is None else f"{cfg.name}: {cfg.sweep.field}"


def write_plotdata(summary, path: FsPath) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["x", "series", "mean", "ci"])
        for x, series, mean, ci in summary:
            w.writerow([_num(x), series, _num(mean), _num(ci)])


def read_plotdata(path: FsPath) -> list[tuple[float, str, float, float]]:
    with open(path, newline="") as fh:
        return [(float(r["x"]), r["series"], float(r["mean"]), float(r["ci"]))
                for r in csv.DictReader(fh)]
