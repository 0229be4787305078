"""Deterministic per-RTT simulation of congestion-controlled flows.

N flows share one bottleneck path with a capacity, an optional shaping
(policer) rate, and a drop-tail queue.  Time advances one round trip per
tick.  Each tick every active flow offers
min(cwnd * mss * 8 / rtt, socket_buffer * 8 / rtt, rate_cap); when the
aggregate exceeds the serviceable rate the excess first fills the queue,
and a full queue drops the remainder, which triggers loss events:

* without random early drop, the drop burst hits every flow sharing the
  tick, one multiplicative decrease per dropped segment of its share --
  a large burst collapses the window to near one segment, after which
  recovery is additive and slow (the tail-drop pathology);
* with random early drop, a single seeded-random flow (weighted by
  offered rate) takes a single decrease, keeping losses desynchronized
  and mild.

Identical scenarios (including the seed) produce bit-identical traces.
The random source is xorshift64* so other implementations can reproduce
runs exactly; see Xorshift64Star.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .netmodel import (
    CcParams,
    CcState,
    on_loss,
    on_rtt_ack,
)
from .trace import BandwidthTrace, TraceSample, run_average, windowed_peak

__all__ = [
    "InvalidScenario",
    "LinkSpec",
    "FlowConfig",
    "Scenario",
    "Simulation",
    "Xorshift64Star",
    "run_scenario",
    "run_average",
    "windowed_peak",
    "BandwidthTrace",
    "scenario_from_dict",
    "scenario_from_json",
    "scenario_to_dict",
]

_MASK64 = (1 << 64) - 1


class InvalidScenario(ValueError):
    """Raised for scenarios that violate their structural invariants."""


class Xorshift64Star:
    """xorshift64* PRNG.

    State transition: x ^= x >> 12; x ^= x << 25; x ^= x >> 27 (all mod
    2^64); output is state * 2685821657736338717 mod 2^64.  uniform()
    maps the top 53 bits to [0, 1).  Seed 0 is remapped to
    0x9E3779B97F4A7C15 since the all-zero state is a fixed point.
    """

    def __init__(self, seed: int):
        self._x = seed & _MASK64
        if self._x == 0:
            self._x = 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._x
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._x = x
        return (x * 2685821657736338717) & _MASK64

    def uniform(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)


_DEFAULT_MSS = 1460


@dataclass(frozen=True)
class LinkSpec:
    """Shared bottleneck path: capacity, RTT, optional shaping and queue."""

    capacity_bps: float
    rtt_s: float
    shape_bps: float | None = None
    queue_bytes: int | None = None
    red_enabled: bool = False
    seed: int = 1

    def __post_init__(self) -> None:
        if self.capacity_bps <= 0:
            raise InvalidScenario("capacity_bps must be positive")
        if self.rtt_s <= 0:
            raise InvalidScenario("rtt_s must be positive")
        if self.shape_bps is not None and not 0 < self.shape_bps <= self.capacity_bps:
            raise InvalidScenario("shape_bps must be in (0, capacity_bps]")
        if self.queue_bytes is None:
            # default: twice the bandwidth-delay product of the served rate
            served = self.shape_bps if self.shape_bps is not None else self.capacity_bps
            object.__setattr__(self, "queue_bytes", int(2 * served * self.rtt_s / 8))
        if self.queue_bytes < _DEFAULT_MSS:
            raise InvalidScenario("queue_bytes must hold at least one segment")

    @property
    def served_bps(self) -> float:
        return min(self.capacity_bps, self.shape_bps or self.capacity_bps)


@dataclass(frozen=True)
class FlowConfig:
    """One congestion-controlled flow riding the shared link."""

    cc: CcParams = CcParams()
    socket_buffer_bytes: int = 8 * 2**20
    rate_cap_bps: float | None = None
    start_s: float = 0.0
    stop_s: float | None = None

    def __post_init__(self) -> None:
        if self.socket_buffer_bytes <= 0:
            raise InvalidScenario("socket_buffer_bytes must be positive")
        if self.start_s < 0:
            raise InvalidScenario("start_s must be >= 0")
        if self.stop_s is not None and not self.start_s < self.stop_s:
            raise InvalidScenario("start_s must be < stop_s")
        if self.rate_cap_bps is not None and self.rate_cap_bps <= 0:
            raise InvalidScenario("rate_cap_bps must be positive when set")


@dataclass(frozen=True)
class Scenario:
    link: LinkSpec
    flows: tuple[FlowConfig, ...]
    duration_s: float
    sample_interval_s: float = 5.0

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise InvalidScenario("duration_s must be positive")
        if self.sample_interval_s <= 0:
            raise InvalidScenario("sample_interval_s must be positive")
        if not self.flows:
            raise InvalidScenario("scenario needs at least one flow")
        object.__setattr__(self, "flows", tuple(self.flows))


@dataclass
class LossEvent:
    time_s: float
    flow_decreases: dict[int, int]
    dropped_bytes: int


class Simulation:
    """Stepwise engine; use run() for the whole scenario or step() to inspect.

    Exposes queue backlog and the loss-event log, which the trace does
    not carry.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.rng = Xorshift64Star(scenario.link.seed)
        self.states: list[CcState] = [
            CcState(rate_cap_bps=f.rate_cap_bps) for f in scenario.flows
        ]
        self.backlog_bits = 0.0
        self.tick_index = 0
        self.loss_events: list[LossEvent] = []
        n_bins = max(1, math.ceil(round(scenario.duration_s / scenario.sample_interval_s, 9)))
        self._bin_bits = [[0.0] * len(scenario.flows) for _ in range(n_bins)]

    def _offered_bps(self, i: int, t: float) -> float:
        flow = self.scenario.flows[i]
        stop = flow.stop_s if flow.stop_s is not None else self.scenario.duration_s
        if not flow.start_s <= t < stop:
            return 0.0
        rtt = self.scenario.link.rtt_s
        state = self.states[i]
        offered = state.cwnd * flow.cc.mss_bytes * 8.0 / rtt
        offered = min(offered, flow.socket_buffer_bytes * 8.0 / rtt)
        if flow.rate_cap_bps is not None:
            offered = min(offered, flow.rate_cap_bps)
        return offered

    def step(self) -> list[float]:
        """Advance one RTT; returns per-flow delivered bits/s for the tick."""
        link = self.scenario.link
        rtt = link.rtt_s
        t = self.tick_index * rtt
        offered = [self._offered_bps(i, t) for i in range(len(self.states))]
        total = sum(offered)
        limit = link.served_bps

        if total > limit:
            scale = limit / total
            delivered = [o * scale for o in offered]
        else:
            delivered = list(offered)

        self.backlog_bits += (total - limit) * rtt
        if self.backlog_bits < 0.0:
            self.backlog_bits = 0.0
        queue_bits = link.queue_bytes * 8.0
        dropped_bits = 0.0
        if self.backlog_bits > queue_bits:
            dropped_bits = self.backlog_bits - queue_bits
            self.backlog_bits = queue_bits
        assert 0.0 <= self.backlog_bits <= queue_bits

        decreases: dict[int, int] = {}
        if dropped_bits > 0.0:
            sharing = [i for i, o in enumerate(offered) if o > 0.0]
            if link.red_enabled:
                # early drop: one victim, weighted by offered rate
                pick = self.rng.uniform() * total
                victim = sharing[-1]
                acc = 0.0
                for i in sharing:
                    acc += offered[i]
                    if pick < acc:
                        victim = i
                        break
                decreases[victim] = 1
            else:
                # tail drop: the burst hits everyone, one decrease per
                # dropped segment of each flow's share
                for i in sharing:
                    share = dropped_bits * offered[i] / total
                    mss = self.scenario.flows[i].cc.mss_bytes
                    decreases[i] = max(1, math.ceil(share / (8.0 * mss)))
            self.loss_events.append(
                LossEvent(t, dict(decreases), int(dropped_bits / 8))
            )

        for i, flow in enumerate(self.scenario.flows):
            if offered[i] <= 0.0:
                continue
            if i in decreases:
                state = self.states[i]
                for _ in range(decreases[i]):
                    state = on_loss(state, flow.cc)
                self.states[i] = state
            else:
                state = on_rtt_ack(self.states[i], flow.cc, rtt)
                # a flow cannot keep more in flight than its socket buffer
                window_cap = flow.socket_buffer_bytes / flow.cc.mss_bytes
                if state.cwnd > window_cap:
                    state = CcState(
                        cwnd=max(1.0, window_cap),
                        ssthresh=state.ssthresh,
                        mode=state.mode,
                        rate_cap_bps=state.rate_cap_bps,
                    )
                self.states[i] = state

        interval = self.scenario.sample_interval_s
        k = min(len(self._bin_bits) - 1, int(t / interval))
        dt = min(rtt, self.scenario.duration_s - t)
        for i, d in enumerate(delivered):
            self._bin_bits[k][i] += d * dt
        self.tick_index += 1
        return delivered

    def run(self) -> BandwidthTrace:
        link = self.scenario.link
        n_ticks = math.ceil(round(self.scenario.duration_s / link.rtt_s, 9))
        while self.tick_index < n_ticks:
            self.step()
        samples = []
        interval = self.scenario.sample_interval_s
        for k, bits in enumerate(self._bin_bits):
            start = k * interval
            width = min(interval, self.scenario.duration_s - start)
            per_flow = tuple(b / width for b in bits)
            samples.append(TraceSample(start, per_flow, sum(per_flow)))
        labels = [f"flow_{i}" for i in range(len(self.scenario.flows))]
        return BandwidthTrace(interval, self.scenario.duration_s, labels, samples)


def run_scenario(scenario: Scenario) -> BandwidthTrace:
    """Run the whole scenario deterministically and return its trace."""
    return Simulation(scenario).run()


def _cc_from_dict(d: dict) -> CcParams:
    return CcParams(
        variant=d.get("variant", "highspeed"),
        low_window=float(d.get("low_window", 38.0)),
        high_window=float(d.get("high_window", 83000.0)),
        high_p=float(d.get("high_p", 1e-7)),
        high_decrease=float(d.get("high_decrease", 0.1)),
        mss_bytes=int(d.get("mss_bytes", 1460)),
    )


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        link_doc = doc["link"]
        link = LinkSpec(
            capacity_bps=float(link_doc["capacity_bps"]),
            rtt_s=float(link_doc["rtt_s"]),
            shape_bps=(
                float(link_doc["shape_bps"])
                if link_doc.get("shape_bps") is not None
                else None
            ),
            queue_bytes=(
                int(link_doc["queue_bytes"])
                if link_doc.get("queue_bytes") is not None
                else None
            ),
            red_enabled=bool(link_doc.get("red_enabled", False)),
            seed=int(link_doc.get("seed", 1)),
        )
        flows = tuple(
            FlowConfig(
                cc=_cc_from_dict(f.get("cc", {})),
                socket_buffer_bytes=int(f.get("socket_buffer_bytes", 8 * 2**20)),
                rate_cap_bps=(
                    float(f["rate_cap_bps"])
                    if f.get("rate_cap_bps") is not None
                    else None
                ),
                start_s=float(f.get("start_s", 0.0)),
                stop_s=float(f["stop_s"]) if f.get("stop_s") is not None else None,
            )
            for f in doc.get("flows", [])
        )
        return Scenario(
            link=link,
            flows=flows,
            duration_s=float(doc["duration_s"]),
            sample_interval_s=float(doc.get("sample_interval_s", 5.0)),
        )
    except InvalidScenario:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScenario(f"bad scenario document: {exc}") from exc


def scenario_from_json(path: str) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "link": {
            "capacity_bps": s.link.capacity_bps,
            "rtt_s": s.link.rtt_s,
            "shape_bps": s.link.shape_bps,
            "queue_bytes": s.link.queue_bytes,
            "red_enabled": s.link.red_enabled,
            "seed": s.link.seed,
        },
        "flows": [
            {
                "cc": {
                    "variant": f.cc.variant,
                    "low_window": f.cc.low_window,
                    "high_window": f.cc.high_window,
                    "high_p": f.cc.high_p,
                    "high_decrease": f.cc.high_decrease,
                    "mss_bytes": f.cc.mss_bytes,
                },
                "socket_buffer_bytes": f.socket_buffer_bytes,
                "rate_cap_bps": f.rate_cap_bps,
                "start_s": f.start_s,
                "stop_s": f.stop_s,
            }
            for f in s.flows
        ],
        "duration_s": s.duration_s,
        "sample_interval_s": s.sample_interval_s,
    }
