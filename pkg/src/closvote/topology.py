"""Parameterized three-tier Clos fabrics with dense, stable link identifiers.

Node numbering (all ids are plain ints)::

    ToRs      0 .. n_tor-1               tor = pod * n0 + i
    tier-1    n_tor .. +n_t1             n_tor + pod * n1 + j
    tier-2    n_tor + n_t1 .. +n2        n_tor + n_t1 + l
    hosts     n_switches ..              n_switches + tor * H + h

Link numbering follows the sort order (level, pod, lower index, upper index)
with levels ordered Level1, Level2, Host, so switch-fabric ids do not move
when host links are toggled.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np


class TopologyError(ValueError):
    """Invalid Clos parameters or a lookup that does not name a link."""


class NotAdjacentError(TopologyError):
    """The two nodes exist but share no link."""


class Level(enum.IntEnum):
    LEVEL1 = 0
    LEVEL2 = 1
    HOST = 2

    @property
    def label(self) -> str:
        return {Level.LEVEL1: "level1", Level.LEVEL2: "level2", Level.HOST: "host"}[self]

    @classmethod
    def parse(cls, value: "str | int | Level") -> "Level":
        if isinstance(value, Level):
            return value
        if isinstance(value, int):
            return cls(value)
        key = value.strip().lower().replace("_", "").replace("-", "")
        table = {"level1": cls.LEVEL1, "l1": cls.LEVEL1, "level2": cls.LEVEL2,
                 "l2": cls.LEVEL2, "host": cls.HOST}
        if key not in table:
            raise TopologyError(f"unknown link level {value!r}")
        return table[key]


class NodeKind(enum.Enum):
    TOR = "tor"
    TIER1 = "tier1"
    TIER2 = "tier2"
    HOST = "host"


@dataclass(frozen=True)
class ClosParams:
    """Shape of a Clos fabric.

    ``n0`` ToRs and ``n1`` tier-1 switches per pod, ``n2`` global tier-2
    switches and ``hosts_per_tor`` hosts below each ToR.
    """

    n_pod: int = 2
    n0: int = 8
    n1: int = 4
    n2: int = 4
    hosts_per_tor: int = 16
    include_host_links: bool = True

    def __post_init__(self) -> None:
        for name in ("n_pod", "n0", "n1", "n2", "hosts_per_tor"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TopologyError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise TopologyError(f"{name} must be >= 1, got {value}")

    @property
    def H(self) -> int:
        return self.hosts_per_tor

    @property
    def n_tor(self) -> int:
        return self.n_pod * self.n0

    @property
    def n_hosts(self) -> int:
        return self.n_tor * self.hosts_per_tor

    @property
    def n_level1(self) -> int:
        return self.n_pod * self.n0 * self.n1

    @property
    def n_level2(self) -> int:
        return self.n_pod * self.n1 * self.n2

    @property
    def n_host_links(self) -> int:
        return self.n_hosts if self.include_host_links else 0

    @property
    def n_links(self) -> int:
        return self.n_level1 + self.n_level2 + self.n_host_links

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ClosParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise TopologyError(f"unknown topology field(s): {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Link:
    id: int
    level: Level
    a: int  # lower-tier endpoint (host, ToR or tier-1)
    b: int  # upper-tier endpoint (ToR, tier-1 or tier-2)
    pod: int


@dataclass(frozen=True, eq=False)
class Topology:
    """Immutable Clos fabric with array-backed link tables."""

    params: ClosParams
    link_level: np.ndarray = field(repr=False)
    link_a: np.ndarray = field(repr=False)
    link_b: np.ndarray = field(repr=False)
    link_pod: np.ndarray = field(repr=False)

    # -- sizes -------------------------------------------------------------
    @property
    def n_links(self) -> int:
        return int(self.link_level.shape[0])

    @property
    def n_switches(self) -> int:
        p = self.params
        return p.n_tor + p.n_pod * p.n1 + p.n2

    @property
    def n_nodes(self) -> int:
        return self.n_switches + self.params.n_hosts

    # -- node ids ----------------------------------------------------------
    def tor(self, pod: int, i: int) -> int:
        p = self.params
        _check_index("pod", pod, p.n_pod)
        _check_index("ToR", i, p.n0)
        return pod * p.n0 + i

    def tier1(self, pod: int, j: int) -> int:
        p = self.params
        _check_index("pod", pod, p.n_pod)
        _check_index("tier-1", j, p.n1)
        return p.n_tor + pod * p.n1 + j

    def tier2(self, l: int) -> int:
        p = self.params
        _check_index("tier-2", l, p.n2)
        return p.n_tor + p.n_pod * p.n1 + l

    def host(self, tor: int, h: int) -> int:
        p = self.params
        _check_index("ToR", tor, p.n_tor)
        _check_index("host", h, p.hosts_per_tor)
        return self.n_switches + tor * p.hosts_per_tor + h

    def host_tor(self, host: int) -> int:
        return (host - self.n_switches) // self.params.hosts_per_tor

    def node_kind(self, node: int) -> NodeKind:
        p = self.params
        if node < 0 or node >= self.n_nodes:
            raise TopologyError(f"node {node} does not exist")
        if node < p.n_tor:
            return NodeKind.TOR
        if node < p.n_tor + p.n_pod * p.n1:
            return NodeKind.TIER1
        if node < self.n_switches:
            return NodeKind.TIER2
        return NodeKind.HOST

    def node_pod(self, node: int) -> int | None:
        """Pod of a node; ``None`` for tier-2 switches."""
        p = self.params
        kind = self.node_kind(node)
        if kind is NodeKind.TOR:
            return node // p.n0
        if kind is NodeKind.TIER1:
            return (node - p.n_tor) // p.n1
        if kind is NodeKind.HOST:
            return self.host_tor(node) // p.n0
        return None

    # -- link ids ----------------------------------------------------------
    def level1_id(self, pod: int, i: int, j: int) -> int:
        p = self.params
        _check_index("pod", pod, p.n_pod)
        _check_index("ToR", i, p.n0)
        _check_index("tier-1", j, p.n1)
        return (pod * p.n0 + i) * p.n1 + j

    def level2_id(self, pod: int, j: int, l: int) -> int:
        p = self.params
        _check_index("pod", pod, p.n_pod)
        _check_index("tier-1", j, p.n1)
        _check_index("tier-2", l, p.n2)
        return p.n_level1 + (pod * p.n1 + j) * p.n2 + l

    def host_link_id(self, tor: int, h: int) -> int:
        p = self.params
        if not p.include_host_links:
            raise TopologyError("host links are not modeled in this topology")
        _check_index("ToR", tor, p.n_tor)
        _check_index("host", h, p.hosts_per_tor)
        return p.n_level1 + p.n_level2 + tor * p.hosts_per_tor + h

    def link(self, link_id: int) -> Link:
        if link_id < 0 or link_id >= self.n_links:
            raise TopologyError(f"link {link_id} does not exist")
        return Link(int(link_id), Level(int(self.link_level[link_id])),
                    int(self.link_a[link_id]), int(self.link_b[link_id]),
                    int(self.link_pod[link_id]))

    @cached_property
    def _level_ranges(self) -> dict[Level, range]:
        p = self.params
        l1, l2 = p.n_level1, p.n_level2
        return {
            Level.LEVEL1: range(0, l1),
            Level.LEVEL2: range(l1, l1 + l2),
            Level.HOST: range(l1 + l2, l1 + l2 + p.n_host_links),
        }

    def links_by_level(self, level: "Level | str") -> range:
        return self._level_ranges[Level.parse(level)]

    @cached_property
    def _endpoint_index(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): i for i, (a, b) in enumerate(zip(self.link_a, self.link_b))}

    def link_lookup(self, u: int, v: int) -> int:
        """Id of the link joining nodes ``u`` and ``v`` (either order)."""
        for node in (u, v):
            if node < 0 or node >= self.n_nodes:
                raise TopologyError(f"node {node} does not exist")
        idx = self._endpoint_index
        key = (u, v) if (u, v) in idx else (v, u)
        if key not in idx:
            raise NotAdjacentError(f"nodes {u} and {v} are not adjacent")
        return idx[key]

    def incident_links(self, node: int) -> dict[Level, list[int]]:
        """Links touching ``node``, grouped by level."""
        mask = (self.link_a == node) | (self.link_b == node)
        out: dict[Level, list[int]] = {}
        for lid in np.flatnonzero(mask):
            out.setdefault(Level(int(self.link_level[lid])), []).append(int(lid))
        return out

    def link_switches(self, link_id: int) -> tuple[int, ...]:
        """Switch endpoints of a link (hosts excluded)."""
        a, b = int(self.link_a[link_id]), int(self.link_b[link_id])
        return tuple(n for n in (a, b) if n < self.n_switches)

    # -- serialization -----------------------------------------------------
    def to_json(self) -> str:
        links = [
            {"id": i, "level": Level(int(lv)).label, "a": int(a), "b": int(b)}
            for i, (lv, a, b) in enumerate(zip(self.link_level, self.link_a, self.link_b))
        ]
        return json.dumps({"params": self.params.to_dict(), "links": links},
                          separators=(",", ":"))


def _check_index(what: str, value: int, bound: int) -> None:
    if value < 0 or value >= bound:
        raise TopologyError(f"{what} index {value} out of range [0, {bound})")


def build_topology(params: ClosParams) -> Topology:
    """Build the Clos fabric for ``params`` (complete bipartite at each tier)."""
    p = params
    n_tor = p.n_tor
    n_t1 = p.n_pod * p.n1
    n_switches = n_tor + n_t1 + p.n2

    pod, i, j = np.meshgrid(np.arange(p.n_pod), np.arange(p.n0), np.arange(p.n1), indexing="ij")
    l1_a = (pod * p.n0 + i).ravel()
    l1_b = (n_tor + pod * p.n1 + j).ravel()
    l1_pod = pod.ravel()

    pod, j, l = np.meshgrid(np.arange(p.n_pod), np.arange(p.n1), np.arange(p.n2), indexing="ij")
    l2_a = (n_tor + pod * p.n1 + j).ravel()
    l2_b = (n_tor + n_t1 + l).ravel()
    l2_pod = pod.ravel()

    parts_a, parts_b, parts_pod = [l1_a, l2_a], [l1_b, l2_b], [l1_pod, l2_pod]
    levels = [np.full(l1_a.size, Level.LEVEL1), np.full(l2_a.size, Level.LEVEL2)]
    if p.include_host_links:
        tor, h = np.meshgrid(np.arange(n_tor), np.arange(p.hosts_per_tor), indexing="ij")
        parts_a.append((n_switches + tor * p.hosts_per_tor + h).ravel())
        parts_b.append(tor.ravel())
        parts_pod.append((tor // p.n0).ravel())
        levels.append(np.full(tor.size, Level.HOST))

    topo = Topology(
        params=p,
        link_level=np.concatenate(levels).astype(np.int8),
        link_a=np.concatenate(parts_a).astype(np.int64),
        link_b=np.concatenate(parts_b).astype(np.int64),
        link_pod=np.concatenate(parts_pod).astype(np.int64),
    )
    for arr in (topo.link_level, topo.link_a, topo.link_b, topo.link_pod):
        arr.setflags(write=False)
    return topo
