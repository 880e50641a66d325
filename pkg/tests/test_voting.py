import numpy as np
import pytest

from closvote.routing import toy_tomography_matrix
from closvote.simulator import FailureScenario, TrafficConfig, draw_scenario, run_epoch
from closvote.voting import (
    UnblamedError,
    VoteTally,
    adjust_votes,
    algorithm1,
    blame_flow,
    blame_flows,
    classify_flows,
    classify_noise,
    rank_links,
    tally_paths,
    tally_votes,
)


@pytest.fixture
def failing_trace(desk):
    rng = np.random.default_rng(7)
    sc = draw_scenario(desk, rng, placement="fixed", links=[desk.level1_id(0, 2, 1)],
                       failed_rate=(0.01, 0.01), good_rate=(0, 1e-6))
    return run_epoch(desk, sc, TrafficConfig(), rng)


def naive_tally(trace):
    votes = np.zeros(trace.n_links)
    for f in trace.flows():
        if f.retransmitted and f.traced:
            for link in f.path.links:
                votes[link] += 1.0 / f.h
    return votes


def test_tally_matches_naive(failing_trace):
    tally = tally_votes(failing_trace)
    assert np.allclose(tally.votes, naive_tally(failing_trace))
    # every voting flow spreads exactly one unit
    assert tally.total == pytest.approx(failing_trace.voting_flows().size)


def test_tally_ignores_untraced(desk):
    rates = np.zeros(desk.n_links)
    rates[desk.links_by_level("host")] = 0.5
    rng = np.random.default_rng(0)
    tr = run_epoch(desk, FailureScenario.fixed(rates), TrafficConfig(flows_per_host=20), rng, budget=0.1)
    assert tally_votes(tr).total == pytest.approx(tr.voting_flows().size)
    assert tr.voting_flows().size == 3 * desk.params.n_hosts


def test_toy_votes():
    m = toy_tomography_matrix()
    paths = np.array([[0, 1], [2, 1]])
    votes = tally_paths(paths, np.array([2, 2]), 3)
    assert votes.tolist() == [0.5, 1.0, 0.5]
    assert rank_links(VoteTally(votes)).top(1) == [1]
    assert m.s.sum() == 2


def test_ranking_ties_by_id():
    r = rank_links(VoteTally(np.array([1.0, 3.0, 1.0, 3.0, 0.0])))
    assert r.order.tolist() == [1, 3, 0, 2, 4]
    assert r.rank(3) == 1 and r.top(2) == [1, 3]


def test_single_failure_found(desk, failing_trace):
    bad = algorithm1(tally_votes(failing_trace), desk, trace=failing_trace)
    assert bad.links == (desk.level1_id(0, 2, 1),)
    assert desk.level1_id(0, 2, 1) in bad and len(bad) == 1


def test_no_votes_no_flags(desk, rng):
    tr = run_epoch(desk, FailureScenario.fixed(np.zeros(desk.n_links)), TrafficConfig(flows_per_host=1), rng)
    assert algorithm1(tally_votes(tr), desk, trace=tr).links == ()


def test_threshold_one_flags_nothing(desk, failing_trace):
    # no single link can hold all the mass when h >= 4
    assert algorithm1(tally_votes(failing_trace), desk, 1.0, trace=failing_trace).links == ()


def test_exact_adjustment_removes_explained_flows(desk, failing_trace):
    tally = tally_votes(failing_trace)
    lmax = rank_links(tally).top(1)[0]
    adj = adjust_votes(tally, lmax, failing_trace, desk, mode="exact")
    through = (failing_trace.paths == lmax).any(axis=1)
    rest = failing_trace.voting_flows()
    rest = rest[~through[rest]]
    expect = tally_paths(failing_trace.paths[rest], failing_trace.h[rest], desk.n_links)
    expect[lmax] = tally.votes[lmax]
    assert np.allclose(adj.votes, expect)


def test_analytic_adjustment_close_to_exact(desk, failing_trace):
    tally = tally_votes(failing_trace)
    lmax = rank_links(tally).top(1)[0]
    exact = adjust_votes(tally, lmax, failing_trace, desk, mode="exact").votes
    analytic = adjust_votes(tally, lmax, failing_trace, desk, mode="analytic").votes
    assert np.all(analytic >= 0)
    assert abs(analytic.sum() - exact.sum()) < 0.25 * tally.total
    with pytest.raises(ValueError):
        adjust_votes(tally, lmax, failing_trace, desk, mode="guess")


def test_frozen_links_keep_votes(desk, failing_trace):
    tally = tally_votes(failing_trace)
    lmax = rank_links(tally).top(1)[0]
    frozen = np.zeros(desk.n_links, dtype=bool)
    other = int(failing_trace.paths[failing_trace.voting_flows()[0], 0])
    frozen[other] = True
    adj = adjust_votes(tally, lmax, failing_trace, desk, mode="exact", frozen=frozen)
    assert adj.votes[other] == tally.votes[other]


def test_two_failures_found(desk):
    rng = np.random.default_rng(3)
    links = [desk.level1_id(0, 0, 0), desk.level2_id(1, 2, 3)]
    sc = draw_scenario(desk, rng, placement="fixed", links=links, failed_rate=(0.01, 0.01),
                       good_rate=(0, 0))
    tr = run_epoch(desk, sc, TrafficConfig(), rng)
    for denominator in ("frozen", "recomputed"):
        bad = algorithm1(tally_votes(tr), desk, trace=tr, denominator=denominator)
        assert sorted(bad.links) == sorted(links)


def test_blame(desk, failing_trace):
    r = rank_links(tally_votes(failing_trace))
    voters = failing_trace.voting_flows()
    vec = blame_flows(failing_trace, r, voters)
    for i, b in zip(voters[:100], vec[:100]):
        assert blame_flow(failing_trace.flow(int(i)), r) == b
    healthy = np.flatnonzero(~failing_trace.retransmitted)[0]
    with pytest.raises(UnblamedError):
        blame_flow(failing_trace.flow(int(healthy)), r)
    assert blame_flows(failing_trace, r, np.array([], dtype=np.int64)).size == 0


def test_classification(desk, failing_trace):
    bad = algorithm1(tally_votes(failing_trace), desk, trace=failing_trace)
    voters = failing_trace.voting_flows()
    mask = classify_flows(failing_trace, bad, voters)
    for i, m in zip(voters, mask):
        label = classify_noise(failing_trace.flow(int(i)), bad)
        assert label == ("failure" if m else "noise")
    assert np.all((failing_trace.paths[voters[mask]] == bad.links[0]).any(axis=1))
