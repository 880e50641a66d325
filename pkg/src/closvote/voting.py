"""1/h vote tallying, iterative bad-link detection and per-flow blame."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .routing import PAD, cooccurrence_vector
from .simulator import EpochTrace, FlowRecord
from .topology import Topology

AdjustMode = Literal["analytic", "exact"]
Denominator = Literal["frozen", "recomputed"]


class UnblamedError(ValueError):
    """Blame was requested for a flow that never voted."""


@dataclass(frozen=True, eq=False)
class VoteTally:
    """Accumulated vote mass per link for one epoch."""

    votes: np.ndarray
    epoch: int = 0

    @property
    def total(self) -> float:
        return float(self.votes.sum())

    @property
    def n_links(self) -> int:
        return self.votes.size

    def __getitem__(self, link: int) -> float:
        return float(self.votes[link])

    def as_dict(self) -> dict[int, float]:
        return {int(i): float(self.votes[i]) for i in np.flatnonzero(self.votes)}

    def scaled(self, factor: float) -> "VoteTally":
        return VoteTally(self.votes * factor, self.epoch)


def tally_paths(paths: np.ndarray, h: np.ndarray, n_links: int) -> np.ndarray:
    """Add ``1/h`` to every link of every row of ``paths``."""
    if paths.size == 0:
        return np.zeros(n_links)
    weights = np.broadcast_to((1.0 / h)[:, None], paths.shape)
    mask = paths != PAD
    return np.bincount(paths[mask], weights=weights[mask], minlength=n_links)


def tally_votes(trace: EpochTrace) -> VoteTally:
    """Each traced retransmitting flow spreads one unit of blame over its path."""
    idx = trace.voting_flows()
    return VoteTally(tally_paths(trace.paths[idx], trace.h[idx], trace.n_links), trace.epoch)


@dataclass(frozen=True, eq=False)
class Ranking:
    """Links by descending votes, ties broken by ascending id."""

    order: np.ndarray
    position: np.ndarray

    def rank(self, link: int) -> int:
        return int(self.position[link])

    def top(self, n: int = 1) -> list[int]:
        return [int(x) for x in self.order[:n]]


def rank_links(tally: VoteTally) -> Ranking:
    order = np.lexsort((np.arange(tally.n_links), -tally.votes))
    position = np.empty_like(order)
    position[order] = np.arange(order.size)
    return Ranking(order, position)


@dataclass(frozen=True, eq=False)
class BadLinkSet:
    """Links flagged by the iterative detector, in pick order."""

    links: tuple[int, ...]
    tallies: tuple[np.ndarray, ...] = field(default=(), repr=False)
    threshold: float = 0.0

    def __contains__(self, link: int) -> bool:
        return link in self.links

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self):
        return iter(self.links)


def _flows_through(trace: EpochTrace, link: int, exclude: np.ndarray | None) -> np.ndarray:
    idx = trace.voting_flows()
    if exclude is not None:
        idx = idx[~exclude[idx]]
    hit = (trace.paths[idx] == link).any(axis=1)
    return idx[hit]


def adjust_votes(
    tally: VoteTally,
    l_max: int,
    trace: EpochTrace,
    topology: Topology,
    mode: AdjustMode = "analytic",
    *,
    frozen: np.ndarray | None = None,
    exclude: np.ndarray | None = None,
) -> VoteTally:
    """Remove from every other link the votes attributed to failures on ``l_max``.

    ``analytic`` estimates each link's share from uniform-ECMP co-occurrence
    (flow count x co-occurrence x mean 1/h); ``exact`` subtracts the actual
    1/h contributions of the flows crossing ``l_max``. ``frozen`` links (and
    ``l_max``) keep their votes; ``exclude`` masks flows already attributed.
    Results are clamped at zero.
    """
    flows = _flows_through(trace, l_max, exclude)
    votes = tally.votes.copy()
    keep = np.zeros(votes.size, dtype=bool)
    keep[l_max] = True
    if frozen is not None:
        keep |= frozen
    if flows.size == 0:
        return VoteTally(votes, tally.epoch)
    if mode == "analytic":
        share = cooccurrence_vector(topology, l_max)
        sub = flows.size * share * float(np.mean(1.0 / trace.h[flows]))
    elif mode == "exact":
        sub = tally_paths(trace.paths[flows], trace.h[flows], votes.size)
    else:
        raise ValueError(f"unknown adjustment mode {mode!r}")
    sub[keep] = 0.0
    return VoteTally(np.maximum(votes - sub, 0.0), tally.epoch)


def algorithm1(
    tally: VoteTally,
    topology: Topology,
    threshold_fraction: float = 0.01,
    *,
    trace: EpochTrace | None = None,
    mode: AdjustMode = "exact",
    denominator: Denominator = "frozen",
) -> BadLinkSet:
    """Flag links while the most-voted unflagged one holds at least
    ``threshold_fraction`` of the vote mass, adjusting the rest after each pick.

    Without a ``trace`` no adjustment is made. ``denominator="frozen"`` keeps
    the epoch's original total as the reference mass; ``"recomputed"`` uses the
    current adjusted total.
    """
    votes = tally.votes.astype(float).copy()
    original_total = float(votes.sum())
    flagged: list[int] = []
    history: list[np.ndarray] = []
    frozen = np.zeros(votes.size, dtype=bool)
    explained = np.zeros(trace.n_flows, dtype=bool) if trace is not None else None
    threshold = threshold_fraction * original_total
    while not frozen.all():
        masked = np.where(frozen, -np.inf, votes)
        l_max = int(np.argmax(masked))  # argmax returns the lowest id among ties
        ref = original_total if denominator == "frozen" else float(votes.sum())
        threshold = threshold_fraction * ref
        if votes[l_max] <= 0.0 or votes[l_max] < threshold:
            break
        flagged.append(l_max)
        frozen[l_max] = True
        if trace is not None:
            current = VoteTally(votes, tally.epoch)
            votes = adjust_votes(current, l_max, trace, topology, mode,
                                 frozen=frozen, exclude=explained).votes
            explained[_flows_through(trace, l_max, None)] = True
        history.append(votes.copy())
    return BadLinkSet(tuple(flagged), tuple(history), threshold)


def blame_flow(flow: FlowRecord, ranking: Ranking) -> int:
    """Highest-ranked link on the flow's path."""
    if not (flow.retransmitted and flow.traced):
        raise UnblamedError(f"flow {flow.flow_id} did not vote (untraced or healthy)")
    links = np.asarray(flow.path.links)
    return int(links[np.argmin(ranking.position[links])])


def blame_flows(trace: EpochTrace, ranking: Ranking, flows: np.ndarray | None = None) -> np.ndarray:
    """Vectorized :func:`blame_flow` over ``flows`` (default: all voting flows)."""
    if flows is None:
        flows = trace.voting_flows()
    paths = trace.paths[flows]
    pos = np.where(paths != PAD, ranking.position[np.maximum(paths, 0)], np.iinfo(np.int64).max)
    return paths[np.arange(flows.size), np.argmin(pos, axis=1)] if flows.size else paths[:, 0]


def classify_noise(flow: FlowRecord, bad_set: BadLinkSet) -> str:
    """``failure`` when the path crosses a flagged link, else ``noise``."""
    return "failure" if any(link in bad_set.links for link in flow.path.links) else "noise"


def classify_flows(trace: EpochTrace, bad_set: BadLinkSet, flows: np.ndarray | None = None) -> np.ndarray:
    """Boolean failure mask aligned with ``flows`` (default: all voting flows)."""
    if flows is None:
        flows = trace.voting_flows()
    flagged = np.zeros(trace.n_links + 1, dtype=bool)
    flagged[list(bad_set.links)] = True
    return flagged[trace.paths[flows]].any(axis=1)
