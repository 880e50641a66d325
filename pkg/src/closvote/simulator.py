"""Epoch-based flow-level drop simulation with traceroute budgeting.

Each packet walks its flow's path and is lost at the first link whose
Bernoulli trial fails, so per-link drop counts are a chain of binomials:
the packets reaching position ``k`` are those not lost at positions ``< k``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Sequence, Union

import numpy as np

from .routing import PAD, Path, TrafficPattern, Uniform, sample_destinations, sample_paths
from .topology import ClosParams, Level, Topology, TopologyError

IntSpec = Union[int, tuple[int, int]]


class ScenarioError(ValueError):
    pass


class SinglePodWarning(UserWarning):
    """The inter-pod term of the traceroute budget is undefined for one pod."""


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True, eq=False)
class FailureScenario:
    """Per-packet drop probability for every link, plus the failed subset."""

    rates: np.ndarray = field(repr=False)
    failed: tuple[int, ...]
    good_interval: tuple[float, float] = (0.0, 1e-6)
    failed_interval: tuple[float, float] = (1e-4, 1e-2)
    placement: str = "uniform"

    def __post_init__(self) -> None:
        if np.any((self.rates < 0) | (self.rates > 1)):
            raise ScenarioError("drop probabilities must lie in [0, 1]")
        if len(set(self.failed)) != len(self.failed):
            raise ScenarioError("failed links must be distinct")
        self.rates.setflags(write=False)

    @property
    def k(self) -> int:
        return len(self.failed)

    @property
    def n_links(self) -> int:
        return self.rates.size

    def failed_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_links, dtype=bool)
        mask[list(self.failed)] = True
        return mask

    def good_links(self) -> np.ndarray:
        return np.flatnonzero(~self.failed_mask())

    @classmethod
    def fixed(cls, rates: Sequence[float], failed: Sequence[int] = ()) -> "FailureScenario":
        return cls(np.asarray(rates, dtype=float).copy(), tuple(int(x) for x in failed),
                   placement="fixed")


def _interval(value: Sequence[float], name: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if not (0.0 <= lo <= hi <= 1.0):
        raise ScenarioError(f"{name} must satisfy 0 <= lo <= hi <= 1, got {value}")
    return lo, hi


def draw_scenario(
    topology: Topology,
    rng: np.random.Generator,
    k: int = 1,
    failed_rate: Sequence[float] = (1e-4, 1e-2),
    good_rate: Sequence[float] = (0.0, 1e-6),
    placement: str = "uniform",
    levels: Sequence[Level | str] | None = None,
    links: Sequence[int] | None = None,
    lead_rate: Sequence[float] | None = None,
    shared_rate: bool = False,
) -> FailureScenario:
    """Draw good-link noise and ``k`` failed links.

    ``placement`` is ``uniform`` (any link), ``levels`` (only links of the
    given levels) or ``fixed`` (exactly ``links``). Random placements skip
    links that no flow can cross (level-2 links of a single-pod fabric). ``lead_rate`` gives the
    first failed link its own interval; ``shared_rate`` makes every failed
    link drop at one common rate.
    """
    good_lo, good_hi = _interval(good_rate, "good_rate")
    bad_lo, bad_hi = _interval(failed_rate, "failed_rate")
    L = topology.n_links
    rates = rng.uniform(good_lo, good_hi, size=L)

    if placement == "fixed":
        if links is None:
            raise ScenarioError("fixed placement needs an explicit link list")
        failed = [int(x) for x in links]
        if any(x < 0 or x >= L for x in failed):
            raise ScenarioError("fixed placement names a link outside the topology")
    else:
        if placement == "uniform":
            pool = np.arange(L)
        elif placement == "levels":
            if not levels:
                raise ScenarioError("levels placement needs at least one level")
            try:
                pool = np.concatenate([np.asarray(topology.links_by_level(lv)) for lv in levels])
            except TopologyError as exc:
                raise ScenarioError(str(exc)) from exc
        else:
            raise ScenarioError(f"unknown placement {placement!r}")
        if topology.params.n_pod == 1:
            # no flow leaves a lone pod, so its level-2 links are never exercised
            pool = pool[topology.link_level[pool] != Level.LEVEL2]
        if k < 0 or k > pool.size:
            raise ScenarioError(f"cannot fail {k} links out of {pool.size}")
        failed = [int(x) for x in rng.choice(pool, size=k, replace=False)]

    if failed:
        if shared_rate:
            bad = np.full(len(failed), rng.uniform(bad_lo, bad_hi))
        else:
            bad = rng.uniform(bad_lo, bad_hi, size=len(failed))
        if lead_rate is not None:
            lead_lo, lead_hi = _interval(lead_rate, "lead_rate")
            bad[0] = rng.uniform(lead_lo, lead_hi)
        rates[failed] = bad
    return FailureScenario(rates, tuple(failed), (good_lo, good_hi), (bad_lo, bad_hi), placement)


# ---------------------------------------------------------------------------
# traffic and flows


@dataclass(frozen=True)
class TrafficConfig:
    """Destination pattern, flows per host per epoch and packets per flow.

    Integer specs are either a fixed count or an inclusive ``(lo, hi)`` range
    drawn uniformly per host (flows) or per flow (packets).
    """

    pattern: TrafficPattern = field(default_factory=Uniform)
    flows_per_host: IntSpec = 60
    packets: IntSpec = 100

    def __post_init__(self) -> None:
        for name in ("flows_per_host", "packets"):
            spec = getattr(self, name)
            lo, hi = (spec, spec) if isinstance(spec, int) else spec
            if lo < 0 or hi < lo:
                raise ScenarioError(f"{name} must be a count or a (lo, hi) range, got {spec}")


def _draw_counts(spec: IntSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, (int, np.integer)):
        return np.full(n, int(spec), dtype=np.int64)
    lo, hi = spec
    return rng.integers(lo, hi + 1, size=n)


@dataclass(frozen=True)
class FlowRecord:
    flow_id: int
    src: int
    dst: int
    path: Path
    packets_sent: int
    link_drops: tuple[int, ...]
    retransmitted: bool
    culprit: int | None
    traced: bool = True

    @property
    def h(self) -> int:
        return self.path.h

    @property
    def total_drops(self) -> int:
        return sum(self.link_drops)


@dataclass(frozen=True, eq=False)
class EpochTrace:
    """All flows of one epoch plus traceroute accounting and ground truth."""

    epoch: int
    scenario: FailureScenario
    src: np.ndarray
    dst: np.ndarray
    paths: np.ndarray
    h: np.ndarray
    intra: np.ndarray
    packets: np.ndarray
    drops: np.ndarray
    retransmitted: np.ndarray
    culprit: np.ndarray
    traced: np.ndarray
    icmp_counts: np.ndarray
    host_traceroutes: np.ndarray
    epoch_seconds: float = 30.0

    @property
    def n_flows(self) -> int:
        return self.src.size

    @property
    def n_links(self) -> int:
        return self.scenario.n_links

    @property
    def total_drops(self) -> np.ndarray:
        return self.drops.sum(axis=1)

    def voting_flows(self) -> np.ndarray:
        """Indices of flows that retransmitted and obtained a traceroute."""
        return np.flatnonzero(self.retransmitted & self.traced)

    def link_drop_totals(self) -> np.ndarray:
        mask = self.paths != PAD
        return np.bincount(self.paths[mask], weights=self.drops[mask],
                           minlength=self.n_links).astype(np.int64)

    def flow(self, i: int) -> FlowRecord:
        h = int(self.h[i])
        culprit = int(self.culprit[i])
        return FlowRecord(
            flow_id=int(i),
            src=int(self.src[i]),
            dst=int(self.dst[i]),
            path=Path(tuple(int(x) for x in self.paths[i, :h]), bool(self.intra[i])),
            packets_sent=int(self.packets[i]),
            link_drops=tuple(int(x) for x in self.drops[i, :h]),
            retransmitted=bool(self.retransmitted[i]),
            culprit=None if culprit < 0 else culprit,
            traced=bool(self.traced[i]),
        )

    def flows(self) -> list[FlowRecord]:
        return [self.flow(i) for i in range(self.n_flows)]

    # -- export ------------------------------------------------------------
    def write_flows_csv(self, fh, prefix: Sequence = (), header: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["flow_id", "src", "dst", "h", "packets", "drops",
                        "retransmitted", "culprit_link", "traced"])
        total = self.total_drops
        for i in range(self.n_flows):
            w.writerow([*prefix, i, int(self.src[i]), int(self.dst[i]), int(self.h[i]),
                        int(self.packets[i]), int(total[i]), int(self.retransmitted[i]),
                        int(self.culprit[i]), int(self.traced[i])])

    def write_icmp_csv(self, fh, prefix: Sequence = (), header: bool = True) -> None:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["switch_id", "rate"])
        rates = self.icmp_counts / self.epoch_seconds
        for sid in range(rates.size):
            w.writerow([*prefix, sid, repr(float(rates[sid]))])

    def to_csv(self, directory: str | FsPath) -> None:
        directory = FsPath(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "flows.csv", "w", newline="") as fh:
            self.write_flows_csv(fh)
        with open(directory / "icmp.csv", "w", newline="") as fh:
            self.write_icmp_csv(fh)

    def serialize(self) -> bytes:
        buf = io.StringIO()
        self.write_flows_csv(buf)
        self.write_icmp_csv(buf)
        return buf.getvalue().encode()


def _switches_on_paths(topology: Topology, trace_paths: np.ndarray, src: np.ndarray,
                       dst: np.ndarray, intra: np.ndarray) -> np.ndarray:
    """Switch ids crossed by each path, as an ``(n, 5)`` array padded with -1."""
    p = topology.params
    off = 1 if p.include_host_links else 0
    n = src.size
    out = np.full((n, 5), PAD, dtype=np.int64)
    if n == 0:
        return out
    out[:, 0] = (src - topology.n_switches) // p.hosts_per_tor
    out[:, 1] = topology.link_b[trace_paths[:, off]]
    # inter-pod: tier-2 then down tier-1; intra-pod turns at the up tier-1
    second = trace_paths[:, off + 1]
    out[:, 2] = np.where(intra, PAD, topology.link_b[second])
    down1 = np.where(intra, second, trace_paths[:, off + 3])
    out[:, 3] = np.where(intra, PAD, topology.link_b[down1])
    out[:, 4] = (dst - topology.n_switches) // p.hosts_per_tor
    return out


def run_epoch(
    topology: Topology,
    scenario: FailureScenario,
    traffic: TrafficConfig,
    rng: np.random.Generator,
    *,
    epoch: int = 0,
    budget: float | None = None,
    epoch_seconds: float = 30.0,
) -> EpochTrace:
    """Simulate one epoch.

    ``budget`` is the per-host traceroute rate ``C_t`` (per second); ``None``
    traces every retransmitting flow. Each host traces at most
    ``floor(C_t * epoch_seconds)`` flows per epoch, in flow order.
    """
    if scenario.n_links != topology.n_links:
        raise ScenarioError("scenario does not cover every link of the topology")
    p = topology.params
    counts = _draw_counts(traffic.flows_per_host, p.n_hosts, rng)
    hosts = topology.n_switches + np.arange(p.n_hosts)
    src = np.repeat(hosts, counts)
    dst = sample_destinations(topology, traffic.pattern, src, rng)
    paths, h, intra = sample_paths(topology, src, dst, rng)
    packets = _draw_counts(traffic.packets, src.size, rng)

    rates = np.append(scenario.rates, 0.0)  # index -1 (padding) drops nothing
    drops = np.zeros(paths.shape, dtype=np.int64)
    remaining = packets.copy()
    for col in range(paths.shape[1]):
        d = rng.binomial(remaining, rates[paths[:, col]])
        drops[:, col] = d
        remaining -= d
    total = drops.sum(axis=1)
    retransmitted = total > 0

    culprit = np.full(src.size, PAD, dtype=np.int64)
    if retransmitted.any():
        rows = np.flatnonzero(retransmitted)
        sub = drops[rows]
        best = sub.max(axis=1, keepdims=True)
        ids = np.where(sub == best, paths[rows], np.iinfo(np.int64).max)
        culprit[rows] = ids.min(axis=1)

    if budget is None:
        traced = retransmitted.copy()
    else:
        if budget < 0:
            raise ScenarioError("traceroute budget must be non-negative")
        allowance = math.floor(budget * epoch_seconds + 1e-9)
        csum = np.cumsum(retransmitted)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        before = np.where(starts > 0, csum[np.maximum(starts - 1, 0)], 0)
        rank = csum - np.repeat(before, counts)
        traced = retransmitted & (rank <= allowance)

    tidx = np.flatnonzero(traced)
    sw = _switches_on_paths(topology, paths[tidx], src[tidx], dst[tidx], intra[tidx])
    sw = sw[sw != PAD]
    icmp = np.bincount(sw, minlength=topology.n_switches).astype(np.int64)
    host_tr = np.bincount(src[tidx] - topology.n_switches, minlength=p.n_hosts).astype(np.int64)

    return EpochTrace(
        epoch=epoch, scenario=scenario, src=src, dst=dst, paths=paths, h=h, intra=intra,
        packets=packets, drops=drops, retransmitted=retransmitted, culprit=culprit,
        traced=traced, icmp_counts=icmp, host_traceroutes=host_tr, epoch_seconds=epoch_seconds,
    )


# ---------------------------------------------------------------------------
# traceroute budget and ICMP accounting


def traceroute_budget(params: ClosParams, t_max: float) -> float:
    """Largest per-host traceroute rate keeping every switch under ``t_max``.

    With a single pod the inter-pod term is undefined; the tier-1 bound alone
    is returned and a :class:`SinglePodWarning` is issued.
    """
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    p = params
    scale = t_max / (p.n0 * p.hosts_per_tor)
    if p.n_pod < 2:
        warnings.warn("one pod: inter-pod term of the traceroute budget dropped",
                      SinglePodWarning, stacklevel=2)
        return scale * p.n1
    return scale * min(p.n1, p.n2 * (p.n0 * p.n_pod - 1) / (p.n0 * (p.n_pod - 1)))


@dataclass(frozen=True, eq=False)
class IcmpReport:
    rates: np.ndarray
    t_max: float

    @property
    def max_rate(self) -> float:
        return float(self.rates.max(initial=0.0))

    @property
    def violated(self) -> bool:
        return self.max_rate > self.t_max

    @property
    def busiest_switch(self) -> int:
        return int(np.argmax(self.rates)) if self.rates.size else -1


def account_icmp(trace: EpochTrace, t_max: float) -> IcmpReport:
    """Per-switch ICMP rate: one response per switch per traceroute crossing it."""
    return IcmpReport(trace.icmp_counts / trace.epoch_seconds, float(t_max))


# ---------------------------------------------------------------------------
# ground truth


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Culprit per retransmitting flow and the noise/failure partition."""

    flows: np.ndarray
    culprits: np.ndarray
    noise: np.ndarray

    @property
    def failure(self) -> np.ndarray:
        return ~self.noise

    def as_dict(self) -> dict[int, tuple[int, str]]:
        return {int(f): (int(c), "noise" if n else "failure")
                for f, c, n in zip(self.flows, self.culprits, self.noise)}


def ground_truth(trace: EpochTrace) -> GroundTruth:
    """Noise flows are those whose culprit link lost exactly one packet in the epoch."""
    flows = np.flatnonzero(trace.retransmitted)
    culprits = trace.culprit[flows]
    per_link = trace.link_drop_totals()
    noise = per_link[culprits] == 1 if flows.size else np.zeros(0, dtype=bool)
    return GroundTruth(flows, culprits, noise)
