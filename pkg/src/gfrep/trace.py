"""Bandwidth traces: windowed per-flow goodput samples and their summaries.

A trace is a sequence of fixed-interval samples, each holding per-flow
goodput in bits/s plus the aggregate.  Both the simulator and the real
transfer engine produce traces (5-second and 1-second bins respectively),
so the summary operations live here, shared by both.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field


class EmptyTrace(ValueError):
    """Raised when a summary is requested for a trace with no samples."""


class WindowTooShort(ValueError):
    """Raised when a peak window is shorter than the sampling interval."""


@dataclass(frozen=True)
class TraceSample:
    time_s: float
    per_flow_bps: tuple[float, ...]
    aggregate_bps: float


@dataclass
class BandwidthTrace:
    """Timestamped per-flow goodput samples over a run.

    ``samples[k]`` covers [time_s, time_s + interval), except the last
    sample which may cover a shorter tail up to ``duration_s``.
    """

    sample_interval_s: float
    duration_s: float
    flow_labels: list[str] = field(default_factory=list)
    samples: list[TraceSample] = field(default_factory=list)

    def summary(self) -> dict:
        """Run average plus peak 5 s / 10 s means (null where not computable)."""
        out = {"run_average_bps": run_average(self)}
        for k in (5, 10):
            try:
                out[f"peak{k}_bps"] = windowed_peak(self, float(k))
            except (WindowTooShort, EmptyTrace):
                out[f"peak{k}_bps"] = None
        return out


def _sample_weight(trace: BandwidthTrace, sample: TraceSample) -> float:
    return min(trace.sample_interval_s, trace.duration_s - sample.time_s)


def run_average(trace: BandwidthTrace) -> float:
    """Time-weighted mean aggregate goodput over the whole run, bits/s."""
    if not trace.samples:
        raise EmptyTrace("trace has no samples")
    total = 0.0
    weight = 0.0
    for sample in trace.samples:
        w = _sample_weight(trace, sample)
        total += sample.aggregate_bps * w
        weight += w
    return total / weight


def windowed_peak(trace: BandwidthTrace, window_s: float) -> float:
    """Maximum mean aggregate goodput over any aligned window of window_s.

    Windows are contiguous runs of whole samples; window_s must be at
    least one sampling interval and fit inside the trace.
    """
    if not trace.samples:
        raise EmptyTrace("trace has no samples")
    interval = trace.sample_interval_s
    if window_s < interval:
        raise WindowTooShort(f"window {window_s}s < sample interval {interval}s")
    n = max(1, round(window_s / interval))
    values = [s.aggregate_bps for s in trace.samples]
    if n > len(values):
        raise WindowTooShort(f"window {window_s}s longer than trace")
    best = max(sum(values[i : i + n]) / n for i in range(len(values) - n + 1))
    return best


def accumulate_bins(
    flow_series: list[list[tuple[float, int]]],
    interval_s: float,
    duration_s: float,
    flow_labels: list[str] | None = None,
) -> BandwidthTrace:
    """Bin raw (time_s, byte_count) events per flow into a BandwidthTrace.

    Event times are relative to the run start; events at or beyond
    duration_s land in the final bin.
    """
    if duration_s <= 0 or interval_s <= 0:
        raise ValueError("duration_s and interval_s must be positive")
    n_bins = max(1, -(-int(duration_s * 1e9) // int(interval_s * 1e9)))
    bits = [[0.0] * len(flow_series) for _ in range(n_bins)]
    for flow_idx, events in enumerate(flow_series):
        for t, nbytes in events:
            k = min(n_bins - 1, max(0, int(t / interval_s)))
            bits[k][flow_idx] += nbytes * 8.0
    samples = []
    for k in range(n_bins):
        start = k * interval_s
        width = min(interval_s, duration_s - start)
        per_flow = tuple(b / width for b in bits[k])
        samples.append(TraceSample(start, per_flow, sum(per_flow)))
    labels = flow_labels or [f"flow_{i}" for i in range(len(flow_series))]
    return BandwidthTrace(interval_s, duration_s, labels, samples)


def trace_to_csv(trace: BandwidthTrace, path: str) -> None:
    """Write `time_s,flow_<i>_bps...,aggregate_bps` rows."""
    n_flows = len(trace.flow_labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["time_s"] + [f"flow_{i}_bps" for i in range(n_flows)] + ["aggregate_bps"]
        )
        for s in trace.samples:
            writer.writerow(
                [repr(s.time_s)]
                + [repr(v) for v in s.per_flow_bps]
                + [repr(s.aggregate_bps)]
            )


def trace_from_csv(path: str) -> BandwidthTrace:
    """Rebuild a trace from trace_to_csv output."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise EmptyTrace(f"{path} has no samples")
    header = rows[0]
    n_flows = len(header) - 2
    samples = []
    for row in rows[1:]:
        t = float(row[0])
        per_flow = tuple(float(v) for v in row[1 : 1 + n_flows])
        samples.append(TraceSample(t, per_flow, float(row[-1])))
    if len(samples) > 1:
        interval = samples[1].time_s - samples[0].time_s
    else:
        interval = max(samples[0].time_s, 1.0)
    duration = samples[-1].time_s + interval
    labels = [f"flow_{i}" for i in range(n_flows)]
    return BandwidthTrace(interval, duration, labels, samples)
