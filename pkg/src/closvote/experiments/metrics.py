"""Per-epoch scoring of engine outputs against simulator ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..routing import PAD
from ..simulator import EpochTrace, GroundTruth


@dataclass(frozen=True)
class EngineOutput:
    """What one engine produced for an epoch.

    ``blamed`` is aligned with ``flows`` (trace row indices); ``flagged`` is
    the engine's bad-link set.
    """

    flows: np.ndarray
    blamed: np.ndarray
    flagged: tuple[int, ...]


@dataclass(frozen=True)
class EpochScore:
    correct: int
    scored: int
    correct_flagged: int
    scored_flagged: int
    true_positives: int
    n_flagged: int
    n_failed: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.scored if self.scored else math.nan

    @property
    def precision(self) -> float:
        # an empty flag set makes no false claims
        return self.true_positives / self.n_flagged if self.n_flagged else 1.0

    @property
    def precision_undefined(self) -> bool:
        return self.n_flagged == 0

    @property
    def recall(self) -> float:
        return self.true_positives / self.n_failed if self.n_failed else 1.0


def evaluation_flows(trace: EpochTrace, truth: GroundTruth) -> np.ndarray:
    """Traced flows whose ground-truth class is ``failure``."""
    keep = truth.failure & trace.traced[truth.flows]
    return truth.flows[keep]


def score_epoch(
    trace: EpochTrace,
    outputs: Mapping[str, EngineOutput],
    truth: GroundTruth,
    failed: Sequence[int],
) -> dict[str, EpochScore]:
    """Blame accuracy, precision and recall for each engine.

    Accuracy counts traced failure-class flows whose blamed link is the
    culprit. The flagged-class variant instead scores the flows whose path
    crosses the engine's own flagged set.
    """
    culprit = trace.culprit
    eval_flows = evaluation_flows(trace, truth)
    failed_set = set(int(x) for x in failed)
    out: dict[str, EpochScore] = {}
    for name, o in outputs.items():
        blamed = np.full(trace.n_flows, PAD, dtype=np.int64)
        blamed[o.flows] = o.blamed
        correct = int(np.count_nonzero(blamed[eval_flows] == culprit[eval_flows]))
        flagged_mask = np.zeros(trace.n_links + 1, dtype=bool)
        flagged_mask[list(o.flagged)] = True
        in_class = o.flows[flagged_mask[trace.paths[o.flows]].any(axis=1)] if o.flows.size else o.flows
        correct_f = int(np.count_nonzero(blamed[in_class] == culprit[in_class]))
        tp = len(failed_set.intersection(o.flagged))
        out[name] = EpochScore(correct, int(eval_flows.size), correct_f, int(in_class.size),
                               tp, len(set(o.flagged)), len(failed_set))
    return out


def normal_ci(values: Sequence[float], z: float = 1.959963984540054) -> tuple[float, float, int]:
    """Mean and 95% normal-approximation half-width over finite ``values``."""
    arr = np.asarray([v for v in values if v == v and not math.isinf(v)], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan, 0
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0, int(arr.size)
    return mean, float(z * arr.std(ddof=1) / math.sqrt(arr.size)), int(arr.size)
