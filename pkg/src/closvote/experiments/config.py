"""Experiment configuration: JSON schema, validation, presets and sweeps."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any

from ..routing import HotToR, RoutingError, SkewedToRSet, TrafficPattern, Uniform
from ..simulator import ScenarioError, TrafficConfig
from ..topology import ClosParams, Level, TopologyError

ENGINES = ("voting", "greedy", "exact_binary", "exact_integer")

PRESETS: dict[str, dict[str, Any]] = {
    "desk": {"n_pod": 2, "n0": 8, "n1": 4, "n2": 4, "hosts_per_tor": 16},
    "paper2pod": {"n_pod": 2, "n0": 20, "n1": 10, "n2": 10, "hosts_per_tor": 40},
}

_TOP_KEYS = {"preset", "topology", "scenario", "traffic", "epochs", "trials", "seed",
             "engines", "voting", "traceroute", "solver", "sweep", "output", "write_flows",
             "name"}
_SCENARIO_KEYS = {"k", "failed_rate", "good_rate", "placement", "levels", "links",
                  "lead_rate", "shared_rate"}
_TRAFFIC_KEYS = {"pattern", "flows_per_host", "packets"}
_VOTING_KEYS = {"threshold", "mode", "denominator"}
_TRACEROUTE_KEYS = {"t_max", "budget", "epoch_seconds"}
_SOLVER_KEYS = {"node_limit"}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _unknown(section: str, data: dict, allowed: set[str]) -> None:
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"{section}.{extra[0]}" if section else extra[0], "unknown field")


def _interval(name: str, value: Any) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(name, f"expected [lo, hi], got {value!r}")
    try:
        lo, hi = float(value[0]), float(value[1])
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected numbers, got {value!r}") from None
    if not 0.0 <= lo <= hi <= 1.0:
        raise ConfigError(name, f"need 0 <= lo <= hi <= 1, got {value!r}")
    return lo, hi


def _int(name: str, value: Any, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def _count_spec(name: str, value: Any):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(name, f"expected a count or [lo, hi], got {value!r}")
        lo, hi = _int(name, value[0]), _int(name, value[1])
        if hi < lo:
            raise ConfigError(name, f"hi < lo in {value!r}")
        return (lo, hi)
    return _int(name, value)


def _pattern(value: Any) -> TrafficPattern:
    if value is None:
        return Uniform()
    if isinstance(value, str):
        value = {"kind": value}
    if not isinstance(value, dict):
        raise ConfigError("traffic.pattern", f"expected an object, got {value!r}")
    kind = value.get("kind", "uniform")
    try:
        if kind == "uniform":
            _unknown("traffic.pattern", value, {"kind"})
            return Uniform()
        if kind == "skewed":
            _unknown("traffic.pattern", value, {"kind", "tors", "weight"})
            return SkewedToRSet(tuple(int(t) for t in value.get("tors", ())),
                                float(value.get("weight", 0.8)))
        if kind == "hot":
            _unknown("traffic.pattern", value, {"kind", "tor", "fraction"})
            return HotToR(int(value.get("tor", 0)), float(value.get("fraction", 0.5)))
    except RoutingError as exc:
        raise ConfigError("traffic.pattern", str(exc)) from None
    raise ConfigError("traffic.pattern.kind", f"unknown pattern {kind!r}")


def pattern_to_dict(pattern: TrafficPattern) -> dict:
    if isinstance(pattern, SkewedToRSet):
        return {"kind": "skewed", "tors": list(pattern.tors), "weight": pattern.weight}
    if isinstance(pattern, HotToR):
        return {"kind": "hot", "tor": pattern.tor, "fraction": pattern.fraction}
    return {"kind": "uniform"}


@dataclass(frozen=True)
class ScenarioSpec:
    k: int = 1
    failed_rate: tuple[float, float] = (1e-4, 1e-2)
    good_rate: tuple[float, float] = (0.0, 1e-6)
    placement: str = "uniform"
    levels: tuple[str, ...] | None = None
    links: tuple[int, ...] | None = None
    lead_rate: tuple[float, float] | None = None
    shared_rate: bool = False


@dataclass(frozen=True)
class Sweep:
    field: str
    values: tuple[Any, ...]
    x: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment description; build with :meth:`from_dict`."""

    params: ClosParams = field(default_factory=lambda: ClosParams(**PRESETS["desk"]))
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    epochs: int = 1
    trials: int = 10
    seed: int = 0
    engines: tuple[str, ...] = ("voting",)
    threshold: float = 0.01
    adjust_mode: str = "exact"
    denominator: str = "frozen"
    t_max: float = 100.0
    budget: float | str | None = None
    epoch_seconds: float = 30.0
    node_limit: int = 200_000
    sweep: Sweep | None = None
    output: str = "out"
    write_flows: bool = False
    name: str = "experiment"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    # -- parsing -----------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        _unknown("", data, _TOP_KEYS)
        raw = copy.deepcopy(data)

        topo = dict(PRESETS.get("desk"))
        preset = data.get("preset")
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            topo = dict(PRESETS[preset])
        t = data.get("topology", {})
        if not isinstance(t, dict):
            raise ConfigError("topology", "expected an object")
        topo.update(t)
        try:
            params = ClosParams.from_dict(topo)
        except TopologyError as exc:
            msg = str(exc)
            bad = next((k for k in topo if msg.startswith(k)), None)
            raise ConfigError(f"topology.{bad}" if bad else "topology", msg) from None

        s = data.get("scenario", {})
        if not isinstance(s, dict):
            raise ConfigError("scenario", "expected an object")
        _unknown("scenario", s, _SCENARIO_KEYS)
        placement = s.get("placement", "uniform")
        if placement not in ("uniform", "levels", "fixed"):
            raise ConfigError("scenario.placement", f"unknown placement {placement!r}")
        levels = s.get("levels")
        if levels is not None:
            try:
                levels = tuple(Level.parse(lv).label for lv in levels)
            except (TopologyError, ValueError, KeyError) as exc:
                raise ConfigError("scenario.levels", str(exc)) from None
            if not params.include_host_links and "host" in levels:
                raise ConfigError("scenario.levels", "host links are disabled in this topology")
        elif placement == "levels":
            raise ConfigError("scenario.levels", "required when placement is 'levels'")
        links = s.get("links")
        if links is not None:
            links = tuple(_int("scenario.links", x) for x in links)
            if any(x >= params.n_links for x in links):
                raise ConfigError("scenario.links", f"link id outside [0, {params.n_links})")
        elif placement == "fixed":
            raise ConfigError("scenario.links", "required when placement is 'fixed'")
        k = _int("scenario.k", s.get("k", 1))
        if placement != "fixed" and k > params.n_links:
            raise ConfigError("scenario.k", f"cannot fail {k} of {params.n_links} links")
        scenario = ScenarioSpec(
            k=len(links) if placement == "fixed" else k,
            failed_rate=_interval("scenario.failed_rate", s.get("failed_rate", (1e-4, 1e-2))),
            good_rate=_interval("scenario.good_rate", s.get("good_rate", (0.0, 1e-6))),
            placement=placement, levels=levels, links=links,
            lead_rate=None if s.get("lead_rate") is None else _interval("scenario.lead_rate", s["lead_rate"]),
            shared_rate=bool(s.get("shared_rate", False)),
        )

        tr = data.get("traffic", {})
        if not isinstance(tr, dict):
            raise ConfigError("traffic", "expected an object")
        _unknown("traffic", tr, _TRAFFIC_KEYS)
        pattern = _pattern(tr.get("pattern"))
        n_tor = params.n_tor
        if isinstance(pattern, SkewedToRSet) and any(not 0 <= x < n_tor for x in pattern.tors):
            raise ConfigError("traffic.pattern.tors", f"ToR ids must lie in [0, {n_tor})")
        if isinstance(pattern, HotToR) and not 0 <= pattern.tor < n_tor:
            raise ConfigError("traffic.pattern.tor", f"ToR id must lie in [0, {n_tor})")
        try:
            traffic = TrafficConfig(pattern,
                                    _count_spec("traffic.flows_per_host", tr.get("flows_per_host", 60)),
                                    _count_spec("traffic.packets", tr.get("packets", 100)))
        except ScenarioError as exc:
            raise ConfigError("traffic", str(exc)) from None

        engines = data.get("engines", ["voting"])
        if isinstance(engines, str):
            engines = [engines]
        if not engines:
            raise ConfigError("engines", "at least one engine is required")
        for e in engines:
            if e not in ENGINES:
                raise ConfigError("engines", f"unknown engine {e!r}; choose from {list(ENGINES)}")

        v = data.get("voting", {})
        _unknown("voting", v, _VOTING_KEYS)
        threshold = float(v.get("threshold", 0.01))
        if not 0.0 <= threshold <= 1.0:
            raise ConfigError("voting.threshold", "must lie in [0, 1]")
        mode = v.get("mode", "exact")
        if mode not in ("exact", "analytic"):
            raise ConfigError("voting.mode", f"unknown adjustment mode {mode!r}")
        denominator = v.get("denominator", "frozen")
        if denominator not in ("frozen", "recomputed"):
            raise ConfigError("voting.denominator", f"unknown denominator {denominator!r}")

        trc = data.get("traceroute", {})
        _unknown("traceroute", trc, _TRACEROUTE_KEYS)
        t_max = float(trc.get("t_max", 100.0))
        if t_max < 0:
            raise ConfigError("traceroute.t_max", "must be non-negative")
        budget = trc.get("budget")
        if isinstance(budget, str) and budget != "theorem":
            raise ConfigError("traceroute.budget", "expected null, a rate, or 'theorem'")
        if isinstance(budget, (int, float)) and not isinstance(budget, bool):
            if budget < 0:
                raise ConfigError("traceroute.budget", "must be non-negative")
            budget = float(budget)
        epoch_seconds = float(trc.get("epoch_seconds", 30.0))
        if epoch_seconds <= 0:
            raise ConfigError("traceroute.epoch_seconds", "must be positive")

        sol = data.get("solver", {})
        _unknown("solver", sol, _SOLVER_KEYS)

        cfg = cls(
            params=params, scenario=scenario, traffic=traffic,
            epochs=_int("epochs", data.get("epochs", 1), 1),
            trials=_int("trials", data.get("trials", 10), 1),
            seed=_int("seed", data.get("seed", 0)),
            engines=tuple(engines), threshold=threshold, adjust_mode=mode,
            denominator=denominator, t_max=t_max, budget=budget, epoch_seconds=epoch_seconds,
            node_limit=_int("solver.node_limit", sol.get("node_limit", 200_000), 1),
            output=str(data.get("output", "out")),
            write_flows=bool(data.get("write_flows", False)),
            name=str(data.get("name", "experiment")),
            raw=raw,
        )
        sw = data.get("sweep")
        if sw is not None:
            cfg = cfg._with_sweep(sw)
        return cfg

    def _with_sweep(self, sw: Any) -> "ExperimentConfig":
        if not isinstance(sw, dict):
            raise ConfigError("sweep", "expected an object with 'field' and 'values'")
        _unknown("sweep", sw, {"field", "values", "x"})
        name = sw.get("field")
        values = sw.get("values")
        if not isinstance(name, str) or not name:
            raise ConfigError("sweep.field", "expected a dotted field name")
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.values", "expected a non-empty list")
        xs = sw.get("x")
        if xs is None:
            xs = []
            for i, v in enumerate(values):
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    xs.append(float(v))
                elif isinstance(v, list) and v and all(isinstance(u, (int, float)) for u in v):
                    xs.append(float(v[-1]))
                else:
                    xs.append(float(i))
        if len(xs) != len(values):
            raise ConfigError("sweep.x", "needs one x per sweep value")
        # validate every point up front
        for v in values:
            point_dict(self.raw, name, v)
        return _replace(self, sweep=Sweep(name, tuple(values), tuple(float(x) for x in xs)))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<json>", str(exc)) from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | FsPath) -> "ExperimentConfig":
        try:
            text = FsPath(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", str(exc)) from None
        return cls.from_json(text)

    # -- sweep points --------------------------------------------------------
    def points(self) -> list[tuple[float, "ExperimentConfig"]]:
        """``(x, config)`` per sweep value; a single point without a sweep."""
        if self.sweep is None:
            return [(0.0, self)]
        return [(x, point_dict(self.raw, self.sweep.field, v))
                for x, v in zip(self.sweep.x, self.sweep.values)]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "topology": self.params.to_dict(),
            "scenario": {
                "k": self.scenario.k, "failed_rate": list(self.scenario.failed_rate),
                "good_rate": list(self.scenario.good_rate), "placement": self.scenario.placement,
                "levels": None if self.scenario.levels is None else list(self.scenario.levels),
                "links": None if self.scenario.links is None else list(self.scenario.links),
                "lead_rate": None if self.scenario.lead_rate is None else list(self.scenario.lead_rate),
                "shared_rate": self.scenario.shared_rate,
            },
            "traffic": {
                "pattern": pattern_to_dict(self.traffic.pattern),
                "flows_per_host": _jsonable(self.traffic.flows_per_host),
                "packets": _jsonable(self.traffic.packets),
            },
            "epochs": self.epochs, "trials": self.trials, "seed": self.seed,
            "engines": list(self.engines),
            "voting": {"threshold": self.threshold, "mode": self.adjust_mode,
                       "denominator": self.denominator},
            "traceroute": {"t_max": self.t_max, "budget": self.budget,
                           "epoch_seconds": self.epoch_seconds},
            "solver": {"node_limit": self.node_limit},
            "sweep": None if self.sweep is None else {
                "field": self.sweep.field, "values": list(self.sweep.values), "x": list(self.sweep.x)},
            "output": self.output, "write_flows": self.write_flows,
        }


def _jsonable(spec):
    return list(spec) if isinstance(spec, tuple) else spec


def _replace(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


def point_dict(raw: dict, dotted: str, value: Any) -> ExperimentConfig:
    """Config with ``dotted`` set to ``value`` (sweep removed)."""
    data = copy.deepcopy(raw)
    data.pop("sweep", None)
    parts = dotted.split(".")
    if parts[0] not in _TOP_KEYS or parts[0] in ("sweep", "preset"):
        raise ConfigError("sweep.field", f"cannot sweep {dotted!r}")
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = {}
            node[part] = child
        if not isinstance(child, dict):
            raise ConfigError("sweep.field", f"{dotted!r} does not name a nested field")
        node = child
    node[parts[-1]] = value
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(exc.field, f"{exc} (sweep value {value!r})") from None
