"""Aggregation of run results: delay distributions, client satisfaction
against the tail-latency standard, and binned egress load CDFs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass
class QoeStandard:
    delay_threshold_us: float = 10_000.0
    violation_budget: float = 0.0001   # max fraction of packets over threshold
    include_slow_start: bool = True

    def __post_init__(self):
        if not 0.0 <= self.violation_budget <= 1.0:
            raise ValueError("violation_budget must be within [0, 1]")


@dataclass
class FlowSatisfaction:
    flow_id: int
    violation_fraction: float
    satisfied: bool
    n_samples: int


@dataclass
class BoxSummary:
    flow_id: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float      # whisker end, within 1.5*IQR of the quartile
    outliers: list[float]


def satisfaction(samples_per_flow: Mapping[int, Sequence[tuple[float, bool]]],
                 standard: QoeStandard) -> tuple[dict[int, FlowSatisfaction], float]:
    """Per-flow satisfied flags plus the overall satisfied fraction.

    Samples are (one_way_delay_us, in_slow_start) pairs; slow-start samples
    are dropped when the standard says to judge the stabilized phase only.
    """
    if not samples_per_flow:
        raise ValueError("no flows to evaluate")
    flags: dict[int, FlowSatisfaction] = {}
    for flow_id in sorted(samples_per_flow):
        pairs = samples_per_flow[flow_id]
        if len(pairs) == 0:
            raise ValueError(f"flow {flow_id} has no delay samples")
        delays = np.asarray([d for d, _ in pairs], dtype=float)
        ss_mask = np.asarray([ss for _, ss in pairs], dtype=bool)
        if not standard.include_slow_start:
            delays = delays[~ss_mask]
            if delays.size == 0:
                raise ValueError(f"flow {flow_id} has no steady-phase samples")
        frac = float(np.count_nonzero(delays > standard.delay_threshold_us)) / delays.size
        flags[flow_id] = FlowSatisfaction(
            flow_id, frac, frac <= standard.violation_budget, int(delays.size))
    rate = sum(1 for f in flags.values() if f.satisfied) / len(flags)
    return flags, rate


def delay_distribution(samples_per_flow: Mapping[int, Sequence[float]],
                       ) -> list[BoxSummary]:
    """Five-number summary per flow with Tukey outliers listed separately."""
    out = []
    for flow_id in sorted(samples_per_flow):
        data = np.asarray(samples_per_flow[flow_id], dtype=float)
        if data.size < 5:
            raise ValueError(f"flow {flow_id}: need at least 5 samples")
        q1, med, q3 = np.percentile(data, [25, 50, 75])
        iqr = q3 - q1
        lo_fence = q1 - 1.5 * iqr
        hi_fence = q3 + 1.5 * iqr
        inside = data[(data >= lo_fence) & (data <= hi_fence)]
        outliers = data[(data < lo_fence) | (data > hi_fence)]
        out.append(BoxSummary(
            flow_id=flow_id,
            minimum=float(inside.min()),
            q1=float(q1),
            median=float(med),
            q3=float(q3),
            maximum=float(inside.max()),
            outliers=sorted(float(x) for x in outliers),
        ))
    return out


@dataclass
class LoadHistogram:
    bin_width_us: int
    bins: np.ndarray  # bytes per bin

    @property
    def total_bytes(self) -> int:
        return int(self.bins.sum())


def bin_egress(entries_per_flow: Mapping[int, Sequence[tuple[int, int]]],
               duration_us: int, bin_width_us: int = 5000) -> LoadHistogram:
    """Total egress bytes per fixed-width time bin, across all flows."""
    n_bins = max(1, -(-duration_us // bin_width_us))
    bins = np.zeros(n_bins, dtype=np.int64)
    for flow_id in sorted(entries_per_flow):
        for t, nbytes in entries_per_flow[flow_id]:
            idx = min(t // bin_width_us, n_bins - 1)
            bins[idx] += nbytes
    return LoadHistogram(bin_width_us, bins)


def load_cdf(hist: LoadHistogram) -> list[tuple[int, float]]:
    """(bin_bytes, cumulative_fraction) pairs over sorted bin loads."""
    if hist.bins.size < 10:
        raise ValueError("run too short: need at least 10 bins")
    ordered = np.sort(hist.bins)
    n = ordered.size
    return [(int(v), (i + 1) / n) for i, v in enumerate(ordered)]
