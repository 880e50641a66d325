import json

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from closvote.routing import RoutingMatrix, toy_tomography_matrix
from closvote.solvers import (
    InfeasibleError,
    assign_counts,
    exact_binary,
    exact_integer,
    greedy_cover,
    prune_dominated,
    satisfies_binary,
    satisfies_integer,
)

from .oracles import min_cover_size


def random_instance(rng, max_links=12, max_failed=10):
    n_links = int(rng.integers(1, max_links + 1))
    n_failed = int(rng.integers(0, max_failed + 1))
    n_ok = int(rng.integers(0, 5))
    paths, drops = [], []
    for i in range(n_failed + n_ok):
        size = int(rng.integers(1, min(4, n_links) + 1))
        paths.append(tuple(sorted(rng.choice(n_links, size=size, replace=False).tolist())))
        drops.append(int(rng.integers(1, 4)) if i < n_failed else 0)
    return RoutingMatrix.from_paths(paths, drops, n_links)


def milp_support(m):
    """Fewest nonzero p with A p >= c, sum p = sum c, p integer, via scipy's MILP."""
    failed = m.failed_rows()
    if failed.size == 0:
        return 0
    L = m.n_links
    big = int(m.c.sum())
    A = m.A.toarray()[failed]
    # variables: p (L ints), y (L binaries)
    cons = [
        LinearConstraint(np.hstack([A, np.zeros_like(A)]), lb=m.c[failed], ub=np.inf),
        LinearConstraint(np.hstack([np.ones(L), np.zeros(L)])[None, :], lb=big, ub=big),
        LinearConstraint(np.hstack([np.eye(L), -big * np.eye(L)]), lb=-np.inf, ub=0),
    ]
    res = milp(c=np.r_[np.zeros(L), np.ones(L)], constraints=cons, integrality=np.ones(2 * L),
               bounds=Bounds(np.zeros(2 * L), np.r_[np.full(L, big), np.ones(L)]))
    assert res.success
    return int(round(res.fun))


def rows_of(m):
    return [m.row(int(i)).tolist() for i in m.failed_rows()]


@pytest.mark.parametrize("seed", range(40))
def test_exact_binary_matches_power_set(seed):
    m = random_instance(np.random.default_rng(seed))
    sol = exact_binary(m)
    assert sol.optimal
    assert satisfies_binary(m, sol.links)
    assert sol.size == min_cover_size(rows_of(m), m.n_links)
    assert greedy_cover(m).size >= sol.size


@pytest.mark.parametrize("seed", range(40))
def test_exact_integer_matches_milp(seed):
    m = random_instance(np.random.default_rng(1000 + seed))
    sol = exact_integer(m)
    assert satisfies_integer(m, sol.counts)
    assert sol.size == milp_support(m)
    assert all(v > 0 for v in sol.counts.values())


def test_greedy_adversarial():
    # failed flows 0..5; link 0 covers {0,1,2}, link 1 covers {3,4,5}, link 2 covers {0,1,3,4}
    paths = [(0, 2), (0, 2), (0,), (1, 2), (1, 2), (1,)]
    m = RoutingMatrix.from_paths(paths, [1] * 6, n_links=3)
    g = greedy_cover(m)
    assert g.links == (2, 0, 1)
    assert exact_binary(m).links == (0, 1)
    assert exact_integer(m).size == 2


def test_toy_instance_all_engines():
    m = toy_tomography_matrix()
    assert greedy_cover(m).links == (1,)
    assert exact_binary(m).links == (1,)
    sol = exact_integer(m)
    assert sol.links == (1,) and sol.counts == {1: 2}


def test_node_limit_reports_budget():
    rng = np.random.default_rng(5)
    paths = [tuple(sorted(rng.choice(30, size=3, replace=False).tolist())) for _ in range(40)]
    m = RoutingMatrix.from_paths(paths, [1] * 40, n_links=30)
    sol = exact_binary(m, node_limit=5)
    assert sol.budget_exceeded and not sol.optimal
    assert satisfies_binary(m, sol.links)


def test_no_failures():
    m = RoutingMatrix.from_paths([(0, 1)], [0], n_links=2)
    assert exact_binary(m).links == ()
    assert exact_integer(m).counts == {}
    assert greedy_cover(m).links == ()


def test_failed_flow_without_path():
    m = RoutingMatrix.from_paths([()], [2], n_links=2)
    with pytest.raises(InfeasibleError):
        greedy_cover(m)


def test_prune_dominated():
    kept = prune_dominated({0: 0b011, 1: 0b001, 2: 0b011, 3: 0b100})
    assert kept == {0: 0b011, 3: 0b100}


def test_assign_counts_conserves_drops():
    m = RoutingMatrix.from_paths([(0, 1), (1, 2), (2,)], [3, 2, 5], n_links=3)
    counts = assign_counts(m, (1, 2))
    assert sum(counts.values()) == 10
    assert satisfies_integer(m, counts)
    assert assign_counts(m, (0,)) is None


def test_solution_json():
    sol = exact_integer(toy_tomography_matrix())
    doc = json.loads(sol.to_json())
    assert doc == {"links": [1], "counts": {"1": 2}, "optimal": True}
    assert sol.ranking() == [1]
