"""Fault localization by 1/h voting on simulated Clos/ECMP fabrics."""

from .routing import (
    HotToR,
    RoutingMatrix,
    SkewedToRSet,
    Uniform,
    build_routing_matrix,
    cooccurrence_vector,
    link_traversal_probability,
    sample_paths,
    toy_tomography_matrix,
)
from .simulator import (
    EpochTrace,
    FailureScenario,
    FlowRecord,
    TrafficConfig,
    account_icmp,
    draw_scenario,
    ground_truth,
    run_epoch,
    traceroute_budget,
)
from .solvers import CoverSolution, exact_binary, exact_integer, greedy_cover
from .theory import (
    BoundReport,
    ConditionError,
    alpha,
    bound_report,
    epsilon_bound,
    kl_bernoulli,
    traceroute_rates,
    vote_prob_bounds,
)
from .topology import ClosParams, Level, Topology, build_topology
from .voting import algorithm1, blame_flows, rank_links, tally_votes

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
