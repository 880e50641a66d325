"""Closed-form traceroute, vote-probability and error bounds for Clos fabrics.

Formulas accept ``exact=True`` to evaluate in :class:`fractions.Fraction`
arithmetic; otherwise they return floats.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Mapping, Sequence, Union

import numpy as np

from .simulator import traceroute_budget
from .topology import ClosParams, Level, Topology

Number = Union[float, Fraction]


class ConditionError(ValueError):
    """A structural precondition of a bound does not hold."""

    def __init__(self, message: str, *, bound: float | None = None, failing: Sequence[str] = ()):
        super().__init__(message)
        self.bound = bound
        self.failing = tuple(failing)


def _q(x, exact: bool):
    return Fraction(x) if exact else float(x)


# ---------------------------------------------------------------------------
# structural conditions


@dataclass(frozen=True)
class PodCondition:
    holds: bool
    required: float
    terms: dict[str, float]
    failing: tuple[str, ...]


def pod_condition(params: ClosParams) -> PodCondition:
    """``n0 >= n2`` and ``n_pod >= 1 + max(n0/n1, n2(n0-1)/(n0(n0-n2)), 1)``."""
    n0, n1, n2, P = params.n0, params.n1, params.n2, params.n_pod
    if n0 > n2:
        middle = n2 * (n0 - 1) / (n0 * (n0 - n2))
    else:
        middle = 0.0 if n0 == 1 and n2 == 1 else math.inf
    terms = {"n0/n1": n0 / n1, "n2(n0-1)/(n0(n0-n2))": middle, "1": 1.0}
    required = 1 + max(terms.values())
    failing = [name for name, value in terms.items() if P < 1 + value]
    if n0 < n2:
        failing.insert(0, "n0>=n2")
    return PodCondition(not failing, required, terms, tuple(failing))


def k_bound(params: ClosParams, exact: bool = False) -> Number:
    """Exclusive upper limit on the number of bad links, ``n2(n0 P - 1)/(n0 (P - 1))``."""
    n0, n2, P = params.n0, params.n2, params.n_pod
    if P < 2:
        return math.inf
    return _q(n2, exact) * (n0 * P - 1) / (n0 * (P - 1))


# ---------------------------------------------------------------------------
# traceroute load


@dataclass(frozen=True)
class TracerouteRates:
    r1: Number
    r2: Number
    switch_bound: Number
    single_pod: bool = False


def traceroute_rates(params: ClosParams, c_t: float, exact: bool = False) -> TracerouteRates:
    """Per-link traceroute rates on level-1 and level-2 links for host rate ``c_t``.

    The switch load bound is ``max(n0 * R1, n1 * R2)``.
    """
    n0, n1, n2, P, H = params.n0, params.n1, params.n2, params.n_pod, params.hosts_per_tor
    base = _q(c_t, exact) * H
    r1 = base / n1
    if P < 2:
        r2 = _q(0, exact)
    else:
        r2 = _q(n0, exact) / (n1 * n2) * _q(n0 * (P - 1), exact) / (n0 * P - 1) * base
    return TracerouteRates(r1, r2, max(n0 * r1, n1 * r2), single_pod=P < 2)


# ---------------------------------------------------------------------------
# signal-to-noise condition


def alpha(params: ClosParams, k: int, exact: bool = False) -> Number:
    """Required ratio between bad- and good-link retransmission probabilities."""
    if k < 0:
        raise ValueError("k must be non-negative")
    n0, n2, P = params.n0, params.n2, params.n_pod
    denominator = n2 * (n0 * P - 1) - n0 * (P - 1) * k
    if P < 2 or denominator <= 0:
        raise ConditionError(f"k={k} violates k < n2(n0 n_pod - 1)/(n0(n_pod - 1))",
                             bound=float(k_bound(params)), failing=("k",))
    return _q(n0 * (4 * n0 - k) * (P - 1), exact) / denominator


def retransmission_prob(p: Number, c: int) -> Number:
    """Chance that a link dropping each packet with ``p`` loses one of ``c`` packets."""
    if not 0 <= p <= 1 or c < 0:
        raise ValueError("need p in [0, 1] and c >= 0")
    return 1 - (1 - p) ** c


def pg_threshold(p_b: float, c_l: int, c_u: int, alpha_value: float) -> float:
    """Largest good-link drop rate for which bad links still outrank good ones."""
    if alpha_value <= 0:
        raise ConditionError("alpha must be positive", failing=("alpha",))
    if c_u <= 0:
        raise ValueError("c_u must be positive")
    return retransmission_prob(p_b, c_l) / (alpha_value * c_u)


# ---------------------------------------------------------------------------
# vote probabilities


def _inter(params: ClosParams, exact: bool) -> Number:
    n0, P = params.n0, params.n_pod
    return _q(n0 * (P - 1), exact) / (n0 * P - 1)


def level1_vote_bound(params: ClosParams, k: int, r_b: Number, r_g: Number,
                      exact: bool = False) -> Number:
    """Worst-case vote probability of a good level-1 link (all ``k`` bad links
    adjacent through its tier-1 switch); valid for ``k <= n2``."""
    n0, n1, n2, P = params.n0, params.n1, params.n2, params.n_pod
    if k > n2:
        raise ConditionError(f"level-1 bound needs k <= n2={n2}", bound=n2, failing=("k",))
    lead = _q(1, exact) / (n0 * n1 * P) * _inter(params, exact)
    good = 4 - _q(k, exact) / n2 + _q(2 * (n0 - 1), exact) / (n0 * (P - 1))
    return lead * (good * r_g + _q(k, exact) / n2 * r_b)


def level2_vote_bound(params: ClosParams, k: int, r_b: Number, r_g: Number,
                      exact: bool = False) -> Number:
    """Worst-case vote probability of a good level-2 link; valid for ``k <= n0``."""
    n0, n1, n2, P = params.n0, params.n1, params.n2, params.n_pod
    if k > n0:
        raise ConditionError(f"level-2 bound needs k <= n0={n0}", bound=n0, failing=("k",))
    lead = _q(1, exact) / (n1 * n2 * P) * _inter(params, exact)
    return lead * ((4 - _q(k, exact) / n0) * r_g + _q(k, exact) / n0 * r_b)


@dataclass(frozen=True)
class VoteBounds:
    v_b_lower: Number
    v_g_upper: Number
    premise: bool  # r_b >= alpha * r_g
    separated: bool  # v_b_lower >= v_g_upper


def vote_prob_bounds(params: ClosParams, k: int, r_b: Number, r_g: Number,
                     exact: bool = False) -> VoteBounds:
    """Lower bound on a bad link's and upper bound on a good link's vote probability.

    Probabilities are per traversal direction (the source-side crossing); a
    flow crossing the link in either direction is exactly twice as likely.
    """
    cond = pod_condition(params)
    if not cond.holds:
        raise ConditionError(f"pod condition fails: n_pod={params.n_pod} < {cond.required:g}",
                             bound=cond.required, failing=cond.failing)
    if k > params.n0:
        raise ConditionError(f"need k <= n0={params.n0}", bound=params.n0, failing=("k",))
    v_b = _q(1, exact) / (params.n0 * params.n1 * params.n_pod) * r_b
    v_g = level2_vote_bound(params, k, r_b, r_g, exact)
    try:
        premise = r_b >= alpha(params, k, exact) * r_g
    except ConditionError:
        premise = False
    return VoteBounds(v_b, v_g, bool(premise), bool(v_b >= v_g))


def _rate_lookup(r, n_links: int):
    if isinstance(r, Mapping):
        return lambda link: r.get(link, 0)
    if isinstance(r, (int, float, Fraction)):
        return lambda link: r
    arr = r
    if len(arr) != n_links:
        raise ValueError("per-link rates must cover every link")
    return lambda link: arr[link]


def event_probabilities(topology: Topology, link: int, r, exact: bool = False) -> dict[str, Number]:
    """Probabilities of the events decomposing a vote on a switch link.

    ``r`` gives each link's retransmission probability (scalar, per-link
    sequence or mapping). Level-1 links yield ``A0``..``A5``, level-2 links
    ``B0``..``B4``; ``union_bound`` is ``X0 * sum(X1..)``. Host links are not
    part of this model.
    """
    p = topology.params
    n0, n1, n2, P = p.n0, p.n1, p.n2, p.n_pod
    if P < 2:
        raise ConditionError("event table needs at least two pods", failing=("n_pod",))
    T = n0 * P
    rate = _rate_lookup(r, topology.n_links)
    lk = topology.link(link)
    one = _q(1, exact)
    other_l1 = [topology.level1_id(t, u, m) for t in range(P) if t != lk.pod
                for u in range(n0) for m in range(n1)]

    if lk.level is Level.LEVEL1:
        s, i = divmod(lk.a, n0)
        j = lk.b - p.n_tor - s * n1
        table = {
            "A0": one / (n0 * n1 * P),
            "A1": rate(link),
            "A2": one / (T - 1) * sum(rate(topology.level1_id(s, kk, j)) for kk in range(n0) if kk != i),
            "A3": _inter(p, exact) / n2 * sum(rate(topology.level2_id(s, j, l)) for l in range(n2)),
            "A4": one * n0 / (T - 1) / (n1 * n2) * sum(
                rate(topology.level2_id(t, m, l)) for t in range(P) if t != s
                for m in range(n1) for l in range(n2)),
            "A5": one / (T - 1) / n1 * sum(rate(x) for x in other_l1),
        }
        table["union_bound"] = table["A0"] * sum(table[f"A{i}"] for i in range(1, 6))
        return table
    if lk.level is Level.LEVEL2:
        s = lk.pod
        j = lk.a - p.n_tor - s * n1
        l = lk.b - p.n_tor - P * n1
        table = {
            "B0": one / P * _inter(p, exact) / (n1 * n2),
            "B1": rate(link),
            "B2": one / n0 * sum(rate(topology.level1_id(s, i, j)) for i in range(n0)),
            "B3": one / (n1 * (P - 1)) * sum(rate(topology.level2_id(t, m, l))
                                             for t in range(P) if t != s for m in range(n1)),
            "B4": one / (n0 * n1 * (P - 1)) * sum(rate(x) for x in other_l1),
        }
        table["union_bound"] = table["B0"] * sum(table[f"B{i}"] for i in range(1, 5))
        return table
    raise ValueError("event decomposition is defined for switch links only")


# ---------------------------------------------------------------------------
# large deviations


def kl_bernoulli(q: float, r: float) -> float:
    """Kullback-Leibler divergence between Bernoulli(q) and Bernoulli(r), in nats.

    Returns ``inf`` when ``q`` puts mass where ``r`` has none.
    """
    if not (0 <= q <= 1 and 0 <= r <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    total = 0.0
    for a, b in ((q, r), (1 - q, 1 - r)):
        if a == 0:
            continue
        if b == 0:
            return math.inf
        total += a * math.log(a / b)
    return max(total, 0.0)


def max_delta(v_g: float, v_b: float) -> float:
    """Largest admissible deviation ``(v_b - v_g)/(v_b + v_g)``."""
    if v_b + v_g <= 0:
        return 0.0
    return (v_b - v_g) / (v_b + v_g)


def epsilon_bound(N: int, v_g: float, v_b: float, delta: float | None = None) -> float:
    """Upper bound on the chance a bad link gets fewer votes than a good one.

    A tail whose threshold falls outside [0, 1] is empty and contributes 0.
    """
    if delta is None:
        delta = max_delta(v_g, v_b)
    up = (1 + delta) * v_g
    down = (1 - delta) * v_b
    total = 0.0
    if up <= 1:
        total += math.exp(-N * kl_bernoulli(up, v_g))
    if down >= 0:
        total += math.exp(-N * kl_bernoulli(down, v_b))
    return total


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class BoundReport:
    c_t: float
    r1: float
    r2: float
    switch_bound: float
    inter_pod_probability: float
    k: int
    k_bound: float
    k_condition: bool
    pod_condition: bool
    pod_required: float
    alpha: float | None
    p_b: float
    p_g: float
    c_l: int
    c_u: int
    pg_threshold: float | None
    p_g_ok: bool | None
    r_b: float
    r_g: float
    v_b_lower: float
    v_g_upper: float
    delta: float
    kl_good: float
    kl_bad: float
    N: int
    epsilon: float

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, float) and not math.isfinite(value):
                out[key] = None if math.isnan(value) else ("inf" if value > 0 else "-inf")
        return out


def bound_report(
    params: ClosParams,
    *,
    t_max: float = 100.0,
    k: int = 1,
    p_b: float = 5e-4,
    p_g: float = 1e-6,
    c_l: int = 100,
    c_u: int = 100,
    N: int = 10_000,
) -> BoundReport:
    """Evaluate every closed-form quantity for one parameterization."""
    import warnings

    from .simulator import SinglePodWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SinglePodWarning)
        c_t = traceroute_budget(params, t_max)
    rates = traceroute_rates(params, c_t)
    kb = float(k_bound(params))
    try:
        a = float(alpha(params, k))
        threshold = pg_threshold(p_b, c_l, c_u, a)
    except ConditionError:
        a, threshold = None, None
    cond = pod_condition(params)
    r_b = float(retransmission_prob(p_b, c_l))
    r_g = float(retransmission_prob(p_g, c_u))
    v_b = r_b / (params.n0 * params.n1 * params.n_pod)
    v_g = float(level2_vote_bound(params, min(k, params.n0), r_b, r_g)) if params.n_pod > 1 else 0.0
    delta = max_delta(v_g, v_b)
    up, down = (1 + delta) * v_g, (1 - delta) * v_b
    return BoundReport(
        c_t=float(c_t), r1=float(rates.r1), r2=float(rates.r2),
        switch_bound=float(rates.switch_bound),
        inter_pod_probability=float(_inter(params, False)) if params.n_pod > 1 else 0.0,
        k=k, k_bound=kb, k_condition=k < kb, pod_condition=cond.holds,
        pod_required=cond.required, alpha=a, p_b=p_b, p_g=p_g, c_l=c_l, c_u=c_u,
        pg_threshold=threshold, p_g_ok=None if threshold is None else p_g <= threshold,
        r_b=r_b, r_g=r_g, v_b_lower=v_b, v_g_upper=v_g, delta=delta,
        kl_good=kl_bernoulli(min(up, 1.0), v_g) if v_g > 0 else 0.0,
        kl_bad=kl_bernoulli(max(down, 0.0), v_b) if v_b > 0 else 0.0,
        N=N, epsilon=epsilon_bound(N, v_g, v_b, delta),
    )


def empirical_tail(samples: np.ndarray, threshold: float, upper: bool) -> float:
    """Fraction of ``samples`` at or beyond ``threshold`` on the given side."""
    return float(np.mean(samples >= threshold if upper else samples <= threshold))
