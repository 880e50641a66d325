"""Set-cover baselines over a routing matrix: greedy, exact binary, exact integer.

Failed flows are represented as bits; each candidate link carries the
bitmask of failed flows whose path it lies on.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .routing import RoutingMatrix


class InfeasibleError(ValueError):
    """Some failed flow has no link that could explain it."""


class _BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class CoverSolution:
    links: tuple[int, ...]
    counts: dict[int, int] | None = None
    optimal: bool = False
    nodes: int = 0
    wall_time: float = field(default=0.0, compare=False)
    budget_exceeded: bool = False

    @property
    def size(self) -> int:
        return len(self.links)

    def ranking(self) -> list[int]:
        """Links by descending count (or pick order for set solutions)."""
        if self.counts is None:
            return list(self.links)
        return sorted(self.counts, key=lambda l: (-self.counts[l], l))

    def to_dict(self) -> dict:
        return {
            "links": [int(l) for l in self.links],
            "counts": None if self.counts is None else {str(k): int(v) for k, v in sorted(self.counts.items())},
            "optimal": bool(self.optimal),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _failed_masks(matrix: RoutingMatrix) -> tuple[np.ndarray, dict[int, int]]:
    """Failed row ids and, per candidate link, the bitmask of failed rows it covers."""
    failed = matrix.failed_rows()
    masks: dict[int, int] = {}
    for bit, row in enumerate(failed):
        links = matrix.row(int(row))
        if links.size == 0:
            raise InfeasibleError(f"failed flow {int(row)} has an empty path")
        for link in links:
            masks[int(link)] = masks.get(int(link), 0) | (1 << bit)
    return failed, masks


def greedy_cover(matrix: RoutingMatrix) -> CoverSolution:
    """Repeatedly take the link explaining the most unexplained failures (ties: lowest id)."""
    start = time.perf_counter()
    failed, masks = _failed_masks(matrix)
    uncovered = (1 << failed.size) - 1
    order = sorted(masks)
    picked: list[int] = []
    while uncovered:
        best, gain = -1, 0
        for link in order:
            g = (masks[link] & uncovered).bit_count()
            if g > gain:
                best, gain = link, g
        picked.append(best)
        uncovered &= ~masks[best]
    return CoverSolution(tuple(picked), nodes=len(picked),
                         wall_time=time.perf_counter() - start)


def prune_dominated(masks: dict[int, int]) -> dict[int, int]:
    """Drop links whose failure set is contained in another link's.

    Among links with identical sets the lowest id is kept, so at least one
    optimum survives.
    """
    by_mask: dict[int, int] = {}
    for link in sorted(masks):
        by_mask.setdefault(masks[link], link)
    items = sorted(by_mask.items(), key=lambda kv: -kv[0].bit_count())
    kept: list[tuple[int, int]] = []
    for mask, link in items:
        if not any(mask & other == mask for other, _ in kept):
            kept.append((mask, link))
    return {link: mask for mask, link in kept}


def _components(masks: dict[int, int], n_rows: int) -> list[tuple[int, dict[int, int]]]:
    """Split rows into groups connected through shared candidate links."""
    parent = list(range(n_rows))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for mask in masks.values():
        bits = _bits(mask)
        for b in bits[1:]:
            ra, rb = find(bits[0]), find(b)
            if ra != rb:
                parent[rb] = ra
    groups: dict[int, int] = {}
    for r in range(n_rows):
        root = find(r)
        groups[root] = groups.get(root, 0) | (1 << r)
    out = []
    for rows in sorted(groups.values(), key=lambda m: (m & -m)):
        sub = {l: m for l, m in masks.items() if m & rows}
        out.append((rows, sub))
    return out


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


class _CoverSearch:
    """Depth-limited search for a cover of ``rows`` using at most ``depth`` links."""

    def __init__(self, rows: int, masks: dict[int, int], node_limit: int, nodes: int = 0):
        self.rows = rows
        self.links = sorted(masks, key=lambda l: (-masks[l].bit_count(), l))
        self.masks = masks
        self.row_links: dict[int, list[int]] = {}
        for link in self.links:
            for r in _bits(masks[link]):
                self.row_links.setdefault(r, []).append(link)
        self.node_limit = node_limit
        self.nodes = nodes

    def solve(self, depth: int) -> list[int] | None:
        return self._dfs(self.rows, depth, [])

    def _dfs(self, uncovered: int, depth: int, chosen: list[int]) -> list[int] | None:
        self.nodes += 1
        if self.nodes > self.node_limit:
            raise _BudgetExceeded
        if not uncovered:
            return list(chosen)
        if depth == 0:
            return None
        need = uncovered.bit_count()
        best_gain = max((self.masks[l] & uncovered).bit_count() for l in self.links)
        if best_gain * depth < need:
            return None
        # branch on the most constrained uncovered row
        row = min(_bits(uncovered), key=lambda r: len(self.row_links[r]))
        for link in self.row_links[row]:
            chosen.append(link)
            found = self._dfs(uncovered & ~self.masks[link], depth - 1, chosen)
            chosen.pop()
            if found is not None:
                return found
        return None


def exact_binary(matrix: RoutingMatrix, k_cap: int | None = None,
                 node_limit: int = 1_000_000) -> CoverSolution:
    """Minimum-cardinality link set explaining every failed flow.

    Dominated links are pruned, rows are split into independent components and
    each component is solved by iterative deepening between a counting lower
    bound and the greedy size. ``k_cap`` bounds the depth searched per
    component; hitting it or ``node_limit`` returns the best cover found with
    ``optimal=False``.
    """
    start = time.perf_counter()
    failed, masks = _failed_masks(matrix)
    if failed.size == 0:
        return CoverSolution((), optimal=True, wall_time=time.perf_counter() - start)
    masks = prune_dominated(masks)
    chosen: list[int] = []
    optimal = True
    exceeded = False
    nodes = 0
    for rows, sub in _components(masks, failed.size):
        greedy = _greedy_masks(rows, sub)
        biggest = max(m.bit_count() for m in sub.values())
        lower = -(-rows.bit_count() // biggest)
        search = _CoverSearch(rows, sub, node_limit, nodes)
        best = greedy
        top = len(greedy) - 1 if k_cap is None else min(len(greedy) - 1, k_cap)
        try:
            for depth in range(lower, top + 1):
                found = search.solve(depth)
                if found is not None:
                    best = found
                    break
            else:
                if k_cap is not None and k_cap < len(greedy) - 1:
                    optimal = False
        except _BudgetExceeded:
            optimal = False
            exceeded = True
        nodes = search.nodes
        chosen.extend(best)
    return CoverSolution(tuple(sorted(chosen)), optimal=optimal, nodes=nodes,
                         wall_time=time.perf_counter() - start, budget_exceeded=exceeded)


def _greedy_masks(rows: int, masks: dict[int, int]) -> list[int]:
    order = sorted(masks)
    picked = []
    while rows:
        best = max(order, key=lambda l: ((masks[l] & rows).bit_count(), -l))
        picked.append(best)
        rows &= ~masks[best]
    return picked


def assign_counts(matrix: RoutingMatrix, support: tuple[int, ...]) -> dict[int, int] | None:
    """Integer drop counts on ``support`` with ``A p >= c`` and ``sum(p) == sum(c)``.

    A support admits such counts exactly when it meets every failed flow's
    path: charging each flow's ``c_i`` to one support link on its path meets
    both constraints, and a flow missing the support can never be covered.
    Each flow is charged to the support link on its path that explains the
    most failed flows (ties: lowest id). Returns ``None`` when infeasible.
    """
    in_support = set(support)
    failed = matrix.failed_rows()
    coverage: dict[int, int] = {l: 0 for l in support}
    rows = [[int(l) for l in matrix.row(int(i)) if int(l) in in_support] for i in failed]
    for r in rows:
        for l in r:
            coverage[l] += 1
    counts = {l: 0 for l in support}
    for i, r in zip(failed, rows):
        if not r:
            return None
        target = min(r, key=lambda l: (-coverage[l], l))
        counts[target] += int(matrix.c[i])
    return counts


def exact_integer(matrix: RoutingMatrix, node_limit: int = 1_000_000) -> CoverSolution:
    """Minimum-support non-negative integer drop counts explaining ``c`` exactly once."""
    start = time.perf_counter()
    binary = exact_binary(matrix, node_limit=node_limit)
    counts = assign_counts(matrix, binary.links)
    if counts is None:  # pragma: no cover - a cover always admits counts
        raise InfeasibleError("minimum cover admits no count assignment")
    # zero-count links only survive when the cover is not minimal (budget hit)
    counts = {l: v for l, v in counts.items() if v > 0}
    return CoverSolution(tuple(sorted(counts)), counts=counts, optimal=binary.optimal, nodes=binary.nodes,
                         wall_time=time.perf_counter() - start,
                         budget_exceeded=binary.budget_exceeded)


def satisfies_binary(matrix: RoutingMatrix, links) -> bool:
    p = np.zeros(matrix.n_links, dtype=np.int64)
    p[list(links)] = 1
    return bool(np.all(matrix.A @ p >= matrix.s))


def satisfies_integer(matrix: RoutingMatrix, counts: dict[int, int]) -> bool:
    p = np.zeros(matrix.n_links, dtype=np.int64)
    for link, value in counts.items():
        if value < 0:
            return False
        p[link] = value
    return bool(np.all(matrix.A @ p >= matrix.c) and p.sum() == matrix.c.sum())
