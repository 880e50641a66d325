import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from closvote.routing import link_traversal_probability
from closvote.simulator import TrafficConfig, draw_scenario, run_epoch
from closvote.theory import (
    ConditionError,
    alpha,
    bound_report,
    epsilon_bound,
    event_probabilities,
    k_bound,
    kl_bernoulli,
    level1_vote_bound,
    level2_vote_bound,
    max_delta,
    pg_threshold,
    pod_condition,
    retransmission_prob,
    traceroute_rates,
    vote_prob_bounds,
)
from closvote.topology import ClosParams, Level, build_topology

PAPER2POD = ClosParams(n_pod=2, n0=20, n1=10, n2=10, hosts_per_tor=40)
THREE_POD = ClosParams(n_pod=3, n0=20, n1=10, n2=10, hosts_per_tor=40, include_host_links=False)


def test_rates_zero():
    r = traceroute_rates(PAPER2POD, 0.0)
    assert (r.r1, r.r2, r.switch_bound) == (0, 0, 0)


def test_rates_at_budget():
    r = traceroute_rates(PAPER2POD, 1.25)
    assert PAPER2POD.n0 * r.r1 == pytest.approx(100.0)
    # 10 * (20/100) * (20/39) * 50
    assert PAPER2POD.n1 * r.r2 == pytest.approx(51.282051, rel=1e-6)
    assert r.switch_bound == pytest.approx(100.0)


def test_rates_exact_mode():
    r = traceroute_rates(PAPER2POD, Fraction(5, 4), exact=True)
    assert r.r2 == Fraction(20, 100) * Fraction(20, 39) * 50


def test_rates_single_pod():
    r = traceroute_rates(ClosParams(n_pod=1), 1.0)
    assert r.r2 == 0 and r.single_pod


def test_alpha_example():
    assert alpha(PAPER2POD, 1, exact=True) == Fraction(1580, 370)
    assert alpha(PAPER2POD, 1) == pytest.approx(4.27027, rel=1e-5)


def test_alpha_at_k_bound():
    kb = k_bound(PAPER2POD, exact=True)
    assert kb == Fraction(390, 20)
    p = ClosParams(n_pod=2, n0=2, n1=2, n2=3)
    assert k_bound(p, exact=True) == Fraction(9, 2)
    with pytest.raises(ConditionError) as err:
        alpha(ClosParams(n_pod=2, n0=4, n1=2, n2=2), 7)  # bound = 2*7/4 = 3.5
    assert err.value.bound == pytest.approx(3.5)
    # exactly at the bound the denominator vanishes
    with pytest.raises(ConditionError):
        alpha(ClosParams(n_pod=2, n0=2, n1=1, n2=2), 3)


@pytest.mark.parametrize("n0", [1, 2, 5, 20])
def test_alpha_k0_equal_tiers(n0):
    p = ClosParams(n_pod=2, n0=n0, n1=3, n2=n0)
    assert alpha(p, 0, exact=True) == Fraction(4 * n0, 2 * n0 - 1)


def test_alpha_alpha_positive_iff_k_condition():
    for k in range(0, 25):
        kb = k_bound(PAPER2POD)
        if k < kb:
            assert alpha(PAPER2POD, k) > 0
        else:
            with pytest.raises(ConditionError):
                alpha(PAPER2POD, k)


def test_retransmission_prob():
    assert retransmission_prob(0.01, 100) == pytest.approx(0.633968, rel=1e-5)
    assert retransmission_prob(0.0, 50) == 0
    assert retransmission_prob(Fraction(1, 2), 2) == Fraction(3, 4)
    with pytest.raises(ValueError):
        retransmission_prob(1.5, 3)


def test_pg_threshold_basic():
    assert pg_threshold(0.0, 10, 100, 4.0) == 0
    with pytest.raises(ConditionError):
        pg_threshold(0.01, 10, 100, 0.0)
    a = alpha(PAPER2POD, 1)
    base = pg_threshold(5e-4, 100, 100, a)
    assert pg_threshold(1e-3, 100, 100, a) > base
    assert pg_threshold(5e-4, 200, 100, a) > base
    assert pg_threshold(5e-4, 100, 200, a) < base
    assert pg_threshold(5e-4, 100, 100, 2 * a) < base


def test_pg_threshold_order_of_magnitude():
    # packet counts per flow drawn from a wide range; c_l, c_u are the
    # 10th and 90th percentiles of one simulated epoch
    t = build_topology(PAPER2POD)
    rng = np.random.default_rng(0)
    tr = run_epoch(t, draw_scenario(t, rng, k=1), TrafficConfig(flows_per_host=20, packets=(10, 1000)), rng)
    c_l, c_u = (int(x) for x in np.percentile(tr.packets, [10, 90]))
    threshold = pg_threshold(5e-4, c_l, c_u, alpha(PAPER2POD, 1))
    # same order of magnitude band as the production figure (1.8e-6), widely
    assert 1.8e-8 <= threshold <= 1.8e-4


def test_pod_condition():
    assert pod_condition(THREE_POD).holds
    two = pod_condition(PAPER2POD)
    assert not two.holds and two.failing == ("n0/n1",) and two.required == 3
    equal = pod_condition(ClosParams(n_pod=50, n0=4, n1=4, n2=4))
    assert equal.failing == ("n2(n0-1)/(n0(n0-n2))",)
    assert pod_condition(ClosParams(n_pod=2, n0=1, n1=1, n2=1)).holds
    bad = pod_condition(ClosParams(n_pod=2, n0=2, n1=4, n2=3))
    assert "n0>=n2" in bad.failing


@pytest.mark.parametrize("n0,n1,n2", [(4, 2, 2), (6, 3, 2), (8, 1, 4), (10, 5, 3), (12, 4, 6)])
def test_pod_condition_reduces_when_n0_ge_2n2(n0, n1, n2):
    for P in range(1, 20):
        holds = pod_condition(ClosParams(n_pod=P, n0=n0, n1=n1, n2=n2)).holds
        assert holds == (P >= 1 + n0 / n1 and P >= 2)


def test_vote_bounds_defaults():
    b = vote_prob_bounds(THREE_POD, 1, 0.5, 1e-4)
    assert b.v_b_lower == pytest.approx(0.5 / 600)
    expect = (1 / (10 * 10 * 3)) * (40 / 59) * ((4 - 1 / 20) * 1e-4 + (1 / 20) * 0.5)
    assert b.v_g_upper == pytest.approx(expect)
    assert b.v_g_upper == pytest.approx(5.7390e-5, rel=1e-4)
    assert b.premise and b.separated


def test_vote_bounds_zero():
    b = vote_prob_bounds(THREE_POD, 0, 0.0, 0.0)
    assert (b.v_b_lower, b.v_g_upper) == (0, 0)


def test_vote_bounds_reject_bad_pods():
    with pytest.raises(ConditionError) as err:
        vote_prob_bounds(PAPER2POD, 1, 0.5, 1e-4)
    assert err.value.failing


@given(k=st.integers(0, 8), rb=st.floats(0, 1), rg=st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_premise_implies_separation(k, rb, rg):
    p = ClosParams(n_pod=4, n0=8, n1=4, n2=3)
    b = vote_prob_bounds(p, k, rb, rg)
    if b.premise:
        assert b.v_b_lower >= b.v_g_upper * (1 - 1e-12)


def test_events_normalization():
    t = build_topology(ClosParams(n_pod=3, n0=4, n1=3, n2=2, include_host_links=False))
    p = t.params
    ev = event_probabilities(t, t.level1_id(0, 0, 0), 0.0, exact=True)
    assert ev["A0"] * p.n0 * p.n1 * p.n_pod == 1


def test_event_b0_matches_traversal():
    t = build_topology(ClosParams(n_pod=2, n0=2, n1=2, n2=2, include_host_links=False))
    ev = event_probabilities(t, t.level2_id(0, 0, 0), 0.0, exact=True)
    assert ev["B0"] == Fraction(1, 12)
    assert float(ev["B0"]) == pytest.approx(link_traversal_probability(t.params, Level.LEVEL2))


@pytest.mark.parametrize("params", [
    ClosParams(n_pod=3, n0=4, n1=3, n2=2, include_host_links=False),
    ClosParams(n_pod=2, n0=2, n1=2, n2=2, include_host_links=False),
    ClosParams(n_pod=5, n0=3, n1=1, n2=2, include_host_links=False),
])
def test_events_reproduce_k0_bounds(params):
    t = build_topology(params)
    one = Fraction(1)
    l1 = event_probabilities(t, t.level1_id(0, 0, 0), one, exact=True)
    l2 = event_probabilities(t, t.level2_id(0, 0, 0), one, exact=True)
    assert l1["union_bound"] == level1_vote_bound(params, 0, one, one, exact=True)
    assert l2["union_bound"] == level2_vote_bound(params, 0, one, one, exact=True)


def test_worst_case_level2_placement_matches_bound():
    # k bad level-1 links on the tier-1 switch feeding the good level-2 link
    params = ClosParams(n_pod=3, n0=4, n1=3, n2=2, include_host_links=False)
    t = build_topology(params)
    rb, rg = Fraction(1, 2), Fraction(1, 100)
    k = 3
    r = [rg] * t.n_links
    for i in range(k):
        r[t.level1_id(0, i, 0)] = rb
    ev = event_probabilities(t, t.level2_id(0, 0, 0), r, exact=True)
    assert ev["union_bound"] == level2_vote_bound(params, k, rb, rg, exact=True)


def test_events_need_switch_link():
    t = build_topology(ClosParams())
    with pytest.raises(ValueError):
        event_probabilities(t, t.host_link_id(0, 0), 0.1)
    with pytest.raises(ConditionError):
        event_probabilities(build_topology(ClosParams(n_pod=1)), 0, 0.1)


def test_kl_values():
    assert kl_bernoulli(0.3, 0.3) == 0
    assert kl_bernoulli(0.5, 0.25) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3))
    assert kl_bernoulli(0.5, 0.25) == pytest.approx(0.14384, abs=1e-5)
    assert kl_bernoulli(0.5, 0.0) == math.inf
    assert kl_bernoulli(0.0, 0.5) == pytest.approx(math.log(2))


@given(q=st.floats(0, 1), r=st.floats(1e-9, 1 - 1e-9))
def test_kl_non_negative(q, r):
    assert kl_bernoulli(q, r) >= 0


def test_epsilon_decreasing_in_n():
    for v_g, v_b in [(5e-4, 2e-3), (1e-3, 1.5e-3), (1e-5, 1e-4)]:
        eps = [epsilon_bound(n, v_g, v_b) for n in (10**3, 10**4, 10**5, 10**6)]
        assert all(a > b for a, b in zip(eps, eps[1:]))


def test_epsilon_uses_max_delta():
    assert max_delta(5e-4, 2e-3) == pytest.approx(0.6)
    assert epsilon_bound(1000, 5e-4, 2e-3) == epsilon_bound(1000, 5e-4, 2e-3, 0.6)
    # an empty upper tail contributes nothing
    assert epsilon_bound(10, 0.6, 0.9, 0.9) == pytest.approx(math.exp(-10 * kl_bernoulli(0.09, 0.9)))


@pytest.mark.parametrize("p", [1e-6, 1e-4, 1e-2, 0.3])
def test_retransmission_sandwich(p):
    cs = range(10, 200, 10)
    r = [retransmission_prob(p, c) for c in cs]
    assert all(a <= b for a, b in zip(r, r[1:]))
    assert r[0] <= retransmission_prob(p, 55) <= r[-1]


def test_linearization_grid():
    for x in np.linspace(0, 1, 101):
        for n in (1, 2, 10, 100, 1000, 10_000):
            assert (1 - x) ** n >= 1 - n * x - 1e-12


def test_bound_report():
    rep = bound_report(THREE_POD, k=1, p_b=5e-4, p_g=1e-6, c_l=100, c_u=100, N=10_000)
    d = rep.to_dict()
    assert d["c_t"] == pytest.approx(1.25)
    assert d["pod_condition"] and d["k_condition"]
    assert d["alpha"] == pytest.approx(float(alpha(THREE_POD, 1)))
    for key in ("inter_pod_probability", "r_b", "r_g", "v_b_lower", "v_g_upper"):
        assert 0 <= d[key] <= 1
    assert d["epsilon"] == pytest.approx(epsilon_bound(10_000, rep.v_g_upper, rep.v_b_lower))


def test_bound_report_k_violation():
    rep = bound_report(ClosParams(n_pod=2, n0=4, n1=2, n2=2), k=4)
    assert rep.alpha is None and not rep.k_condition
