"""Endpoint and ECMP path sampling, analytic traversal/co-occurrence
probabilities, and the flow-by-link routing matrix.

ECMP is modeled as an independent uniform choice at every stage: the
up-going tier-1 switch, the tier-2 switch and the down-going tier-1 switch.
Intra-pod flows turn around at their up-going tier-1 switch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import sparse

from .topology import ClosParams, Level, Topology

PAD = -1


class UndefinedPatternError(ValueError):
    """An analytic probability was requested for non-uniform traffic."""


class RoutingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# traffic patterns


@dataclass(frozen=True)
class Uniform:
    """Destination ToR uniform over every ToR other than the source's."""


@dataclass(frozen=True)
class SkewedToRSet:
    """A ``weight`` share of flows goes to ``tors``; the rest to ToRs outside it."""

    tors: tuple[int, ...]
    weight: float = 0.8

    def __post_init__(self) -> None:
        if not self.tors:
            raise RoutingError("SkewedToRSet needs at least one ToR")
        if len(set(self.tors)) != len(self.tors):
            raise RoutingError("SkewedToRSet ToRs must be distinct")
        if not 0.0 <= self.weight <= 1.0:
            raise RoutingError(f"weight must lie in [0, 1], got {self.weight}")


@dataclass(frozen=True)
class HotToR:
    """A ``fraction`` share of all flows terminates under one hot ToR."""

    tor: int
    fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 1.0:
            raise RoutingError(f"fraction must lie in [0, 1], got {self.fraction}")


TrafficPattern = Union[Uniform, SkewedToRSet, HotToR]


def _pick_excluding(base: np.ndarray, exclude: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Uniform pick from ``base`` minus ``exclude`` (one exclusion per row).

    ``base`` is sorted; ``exclude`` may or may not be a member. ``u`` holds
    uniforms in [0, 1).
    """
    pos = np.searchsorted(base, exclude)
    member = (pos < base.size) & (base[np.minimum(pos, base.size - 1)] == exclude)
    size = base.size - member
    idx = np.minimum((u * size).astype(np.int64), np.maximum(size - 1, 0))
    idx = idx + (member & (idx >= pos))
    return base[np.minimum(idx, base.size - 1)]


def sample_destination_tors(
    topology: Topology, pattern: TrafficPattern, src_tors: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized destination-ToR draw; never returns the source ToR."""
    n_tor = topology.params.n_tor
    if n_tor < 2:
        raise RoutingError("at least two ToRs are needed to route inter-ToR flows")
    src_tors = np.asarray(src_tors, dtype=np.int64)
    n = src_tors.size
    branch_u = rng.random(n)
    pick_u = rng.random(n)

    if isinstance(pattern, Uniform):
        dst = np.minimum((pick_u * (n_tor - 1)).astype(np.int64), n_tor - 2)
        return dst + (dst >= src_tors)

    all_tors = np.arange(n_tor)
    if isinstance(pattern, SkewedToRSet):
        inside = np.array(sorted(pattern.tors), dtype=np.int64)
        if inside.min() < 0 or inside.max() >= n_tor:
            raise RoutingError("SkewedToRSet names a ToR outside the topology")
        outside = np.setdiff1d(all_tors, inside)
        src_inside = np.isin(src_tors, inside)
        n_in = inside.size - src_inside
        n_out = outside.size - ~src_inside
        want_in = branch_u < pattern.weight
        go_in = (want_in & (n_in > 0)) | (n_out <= 0)
        dst = np.empty(n, dtype=np.int64)
        if go_in.any():
            dst[go_in] = _pick_excluding(inside, src_tors[go_in], pick_u[go_in])
        if (~go_in).any():
            dst[~go_in] = _pick_excluding(outside, src_tors[~go_in], pick_u[~go_in])
        return dst

    if isinstance(pattern, HotToR):
        hot = pattern.tor
        if not 0 <= hot < n_tor:
            raise RoutingError("HotToR names a ToR outside the topology")
        # per-source probability chosen so the share over all flows is `fraction`
        q = min(1.0, pattern.fraction * n_tor / (n_tor - 1))
        others = np.setdiff1d(all_tors, [hot])
        dst = _pick_excluding(others, src_tors, pick_u)
        to_hot = (src_tors != hot) & ((branch_u < q) | (others.size < 2))
        dst[to_hot] = hot
        return dst

    raise RoutingError(f"unknown traffic pattern {pattern!r}")


def sample_destinations(
    topology: Topology, pattern: TrafficPattern, src_hosts: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Destination host per source host: ToR by ``pattern``, then host uniformly."""
    p = topology.params
    src_tors = topology_host_tor(topology, src_hosts)
    dst_tor = sample_destination_tors(topology, pattern, src_tors, rng)
    h = rng.integers(0, p.hosts_per_tor, size=dst_tor.size)
    return topology.n_switches + dst_tor * p.hosts_per_tor + h


def topology_host_tor(topology: Topology, hosts: np.ndarray) -> np.ndarray:
    return (np.asarray(hosts, dtype=np.int64) - topology.n_switches) // topology.params.hosts_per_tor


def sample_endpoints(
    topology: Topology, pattern: TrafficPattern, rng: np.random.Generator
) -> tuple[int, int]:
    """One (src_host, dst_host) pair; the source host is uniform."""
    src = topology.n_switches + int(rng.integers(0, topology.params.n_hosts))
    dst = sample_destinations(topology, pattern, np.array([src]), rng)
    return src, int(dst[0])


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Path:
    """Links of one flow in traversal order."""

    links: tuple[int, ...]
    intra_pod: bool

    @property
    def h(self) -> int:
        return len(self.links)

    def __contains__(self, link: int) -> bool:
        return link in self.links

    def __iter__(self):
        return iter(self.links)


def path_width(params: ClosParams) -> int:
    return 6 if params.include_host_links else 4


def sample_paths(
    topology: Topology, src_hosts: np.ndarray, dst_hosts: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ECMP routing.

    Returns ``(paths, h, intra)`` where ``paths`` is an ``(n, width)`` array of
    link ids left-aligned in traversal order and padded with ``-1``.
    """
    p = topology.params
    src_hosts = np.asarray(src_hosts, dtype=np.int64)
    dst_hosts = np.asarray(dst_hosts, dtype=np.int64)
    n = src_hosts.size
    s_tor = topology_host_tor(topology, src_hosts)
    d_tor = topology_host_tor(topology, dst_hosts)
    if np.any(s_tor == d_tor):
        raise RoutingError("source and destination must sit under different ToRs")
    up = rng.integers(0, p.n1, size=n)
    core = rng.integers(0, p.n2, size=n)
    down = rng.integers(0, p.n1, size=n)

    s_pod, d_pod = s_tor // p.n0, d_tor // p.n0
    intra = s_pod == d_pod
    down = np.where(intra, up, down)

    up1 = s_tor * p.n1 + up
    down1 = d_tor * p.n1 + down
    up2 = p.n_level1 + (s_pod * p.n1 + up) * p.n2 + core
    down2 = p.n_level1 + (d_pod * p.n1 + down) * p.n2 + core

    width = path_width(p)
    paths = np.full((n, width), PAD, dtype=np.int64)
    off = 0
    if p.include_host_links:
        host_base = p.n_level1 + p.n_level2
        paths[:, 0] = host_base + (src_hosts - topology.n_switches)
        off = 1
        dst_link = host_base + (dst_hosts - topology.n_switches)
    paths[:, off] = up1
    paths[:, off + 1] = np.where(intra, down1, up2)
    paths[:, off + 2] = np.where(intra, dst_link if off else PAD, down2)
    paths[:, off + 3] = np.where(intra, PAD, down1)
    if off:
        paths[:, 5] = np.where(intra, PAD, dst_link)
    h = np.where(intra, 2, 4) + 2 * off
    return paths, h, intra


def sample_path(topology: Topology, src: int, dst: int, rng: np.random.Generator) -> Path:
    paths, h, intra = sample_paths(topology, np.array([src]), np.array([dst]), rng)
    return Path(tuple(int(x) for x in paths[0, : h[0]]), bool(intra[0]))


# ---------------------------------------------------------------------------
# analytic probabilities under uniform traffic


def _require_uniform(traffic: TrafficPattern | None) -> None:
    if traffic is not None and not isinstance(traffic, Uniform):
        raise UndefinedPatternError("analytic probabilities assume uniform traffic")


def inter_pod_probability(params: ClosParams) -> float:
    """Chance that a uniform inter-ToR flow leaves its source pod."""
    p = params
    return p.n0 * (p.n_pod - 1) / (p.n_tor - 1)


def link_traversal_probability(
    params: ClosParams,
    level: Level | str,
    traffic: TrafficPattern | None = None,
    directed: bool = True,
) -> float:
    """Probability that a uniform random flow crosses one fixed link.

    ``directed=True`` counts only the source-to-destination (upward-first)
    direction, which is the per-link rate used by the traceroute and vote
    bounds; the undirected probability is exactly twice that.
    """
    _require_uniform(traffic)
    p = params
    level = Level.parse(level)
    if level is Level.LEVEL1:
        prob = 1.0 / (p.n0 * p.n1 * p.n_pod)
    elif level is Level.LEVEL2:
        prob = inter_pod_probability(p) / (p.n1 * p.n2 * p.n_pod)
    else:
        prob = 1.0 / (p.n_tor * p.hosts_per_tor)
    return prob if directed else 2.0 * prob


def traversal_vector(topology: Topology, directed: bool = False) -> np.ndarray:
    """Per-link traversal probability for every link of ``topology``."""
    out = np.empty(topology.n_links)
    for level in Level:
        ids = topology.links_by_level(level)
        if len(ids):
            out[ids.start:ids.stop] = link_traversal_probability(topology.params, level,
                                                                 directed=directed)
    return out


def cooccurrence_vector(topology: Topology, link: int) -> np.ndarray:
    """``P(b on path | link on path)`` for every link ``b``.

    By reversal symmetry of uniform traffic the conditional law is the same
    whether ``link`` is crossed on the way up or down, so it suffices to
    condition on ``link`` being the first link of its level on the path.
    """
    p = topology.params
    T, P, n0, n1, n2, H = p.n_tor, p.n_pod, p.n0, p.n1, p.n2, p.hosts_per_tor
    lk = topology.link(link)
    lv, la, lb, lpod = topology.link_level, topology.link_a, topology.link_b, topology.link_pod
    is_l1, is_l2, is_host = (lv == Level.LEVEL1), (lv == Level.LEVEL2), (lv == Level.HOST)
    out = np.zeros(topology.n_links)
    q_inter = inter_pod_probability(p)

    if lk.level is Level.LEVEL1:
        tor, t1 = lk.a, lk.b
        out[is_l1 & (lb == t1)] = 1.0 / (T - 1)
        out[is_l1 & (lpod != lk.pod)] = 1.0 / ((T - 1) * n1)
        out[is_l2 & (la == t1)] = q_inter / n2
        out[is_l2 & (lpod != lk.pod)] = n0 / ((T - 1) * n1 * n2)
        out[is_host & (lb == tor)] = 1.0 / H
        out[is_host & (lb != tor)] = 1.0 / ((T - 1) * H)
    elif lk.level is Level.LEVEL2:
        if P < 2:
            out[link] = 1.0
            return out
        t1, t2 = lk.a, lk.b
        out[is_l1 & (lb == t1)] = 1.0 / n0
        out[is_l1 & (lpod != lk.pod)] = 1.0 / (n0 * (P - 1) * n1)
        out[is_l2 & (lb == t2) & (lpod != lk.pod)] = 1.0 / ((P - 1) * n1)
        out[is_host & (lpod == lk.pod)] = 1.0 / (n0 * H)
        out[is_host & (lpod != lk.pod)] = 1.0 / (n0 * (P - 1) * H)
    else:
        tor = lk.b
        out[is_l1 & (la == tor)] = 1.0 / n1
        out[is_l1 & (la != tor)] = 1.0 / ((T - 1) * n1)
        out[is_l2 & (lpod == lk.pod)] = q_inter / (n1 * n2)
        out[is_l2 & (lpod != lk.pod)] = n0 / ((T - 1) * n1 * n2)
        out[is_host & (lb != tor)] = 1.0 / ((T - 1) * H)
    out[link] = 1.0
    return out


def cooccurrence_probability(topology: Topology, link_a: int, link_b: int) -> float:
    """``P(link_b on path | link_a on path)`` under uniform traffic and ECMP."""
    topology.link(link_b)
    return float(cooccurrence_vector(topology, link_a)[link_b])


# ---------------------------------------------------------------------------
# routing matrix


@dataclass(frozen=True, eq=False)
class RoutingMatrix:
    """Flow-by-link incidence ``A`` with status ``s`` and drop counts ``c``."""

    A: sparse.csr_matrix
    s: np.ndarray
    c: np.ndarray

    @property
    def n_flows(self) -> int:
        return self.A.shape[0]

    @property
    def n_links(self) -> int:
        return self.A.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.A.indices[self.A.indptr[i]:self.A.indptr[i + 1]]

    def failed_rows(self) -> np.ndarray:
        return np.flatnonzero(self.s)

    @classmethod
    def from_paths(
        cls, paths: Sequence[Iterable[int]], drops: Sequence[int], n_links: int
    ) -> "RoutingMatrix":
        indptr = [0]
        indices: list[int] = []
        for i, path in enumerate(paths):
            row = [int(x) for x in path if int(x) != PAD]
            if len(set(row)) != len(row):
                raise RoutingError(f"flow {i} repeats a link")
            if any(x < 0 or x >= n_links for x in row):
                raise RoutingError(f"flow {i} references a link outside [0, {n_links})")
            indices.extend(row)
            indptr.append(len(indices))
        c = np.asarray(drops, dtype=np.int64).reshape(-1)
        if c.size != len(paths):
            raise RoutingError("one drop count per flow is required")
        if np.any(c < 0):
            raise RoutingError("drop counts must be non-negative")
        data = np.ones(len(indices), dtype=np.int8)
        A = sparse.csr_matrix((data, np.array(indices, dtype=np.int64), np.array(indptr)),
                              shape=(len(paths), n_links))
        return cls(A=A, s=(c >= 1).astype(np.int8), c=c)

    def to_triplet_csv(self, path: str | FsPath) -> None:
        """Write ``flow_id,link_id,drops`` rows, one per incidence entry."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["flow_id", "link_id", "drops"])
            for i in range(self.n_flows):
                for link in self.row(i):
                    w.writerow([i, int(link), int(self.c[i])])

    @classmethod
    def from_triplet_csv(cls, path: str | FsPath, n_links: int | None = None) -> "RoutingMatrix":
        rows: dict[int, list[int]] = {}
        drops: dict[int, int] = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                fid = int(rec["flow_id"])
                rows.setdefault(fid, []).append(int(rec["link_id"]))
                drops[fid] = int(rec.get("drops") or 0)
        n_flows = max(rows, default=-1) + 1
        if n_links is None:
            n_links = max((max(r) for r in rows.values()), default=-1) + 1
        paths = [rows.get(i, []) for i in range(n_flows)]
        return cls.from_paths(paths, [drops.get(i, 0) for i in range(n_flows)], n_links)


def build_routing_matrix(flows: Sequence, n_links: int) -> RoutingMatrix:
    """Routing matrix from flow records (anything with ``.path`` and ``.total_drops``)."""
    paths = [tuple(f.path.links if isinstance(f.path, Path) else f.path) for f in flows]
    drops = [int(f.total_drops) for f in flows]
    return RoutingMatrix.from_paths(paths, drops, n_links)


# node labels of the four-node tomography illustration
TOY_LINKS = ("(1,4)", "(2,4)", "(3,4)")


def toy_tomography_matrix(drops: Sequence[int] = (1, 1, 0)) -> RoutingMatrix:
    """Hosts 1, 2, 3 hang off switch 4; link (2,4) is the faulty one.

    Flows are 1-2, 3-2 and 1-3 in that order; link ids follow ``TOY_LINKS``.
    """
    paths = [(0, 1), (2, 1), (0, 2)]
    return RoutingMatrix.from_paths(paths, drops, n_links=3)
