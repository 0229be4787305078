"""Congestion-control window mathematics for Reno and HighSpeed TCP.

Reno grows its congestion window by one segment per round trip and halves
it on loss.  The HighSpeed variant keeps that behaviour for small windows
and, above ``low_window`` segments, switches to a response curve that is
log-linear between two anchors: (low_window, standard-TCP loss rate) and
(high_window, high_p).  From that curve follow a per-loss decrease
fraction b(w) that shrinks below 0.5 as the window grows, and a per-RTT
additive increase a(w) that grows above 1, so high-rate flows recover
quickly without giving up fairness at low rates.

All functions here are pure and operate on value types; they carry no
clocks, sockets or shared state and are safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

RENO = "reno"
HIGHSPEED = "highspeed"

SLOW_START = "slow_start"
CONGESTION_AVOIDANCE = "congestion_avoidance"

#: ssthresh used when a flow has seen no loss yet (effectively "unset").
INITIAL_SSTHRESH = 1e9


class DomainError(ValueError):
    """Raised when a response-function query lies outside its domain."""


@dataclass(frozen=True)
class CcParams:
    """Variant selector plus the anchor constants of the HighSpeed response curve."""

    variant: str = HIGHSPEED
    low_window: float = 38.0
    high_window: float = 83000.0
    high_p: float = 1e-7
    high_decrease: float = 0.1
    mss_bytes: int = 1460

    def __post_init__(self) -> None:
        if self.variant not in (RENO, HIGHSPEED):
            raise ValueError(f"unknown congestion-control variant {self.variant!r}")
        if not self.low_window < self.high_window:
            raise ValueError("low_window must be < high_window")
        if not 0.0 < self.high_decrease <= 0.5:
            raise ValueError("high_decrease must be in (0, 0.5]")
        if not 0.0 < self.high_p < 1.0:
            raise ValueError("high_p must be in (0, 1)")
        if self.mss_bytes <= 0:
            raise ValueError("mss_bytes must be positive")


@dataclass(frozen=True)
class CcState:
    """Per-flow congestion-control state, updated once per round trip."""

    cwnd: float = 2.0
    ssthresh: float = INITIAL_SSTHRESH
    mode: str = SLOW_START
    rate_cap_bps: float | None = None

    def __post_init__(self) -> None:
        if self.cwnd < 1.0:
            raise ValueError("cwnd must be >= 1 segment")
        if self.ssthresh < 2.0:
            raise ValueError("ssthresh must be >= 2 segments")
        if self.mode not in (SLOW_START, CONGESTION_AVOIDANCE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rate_cap_bps is not None and self.rate_cap_bps <= 0:
            raise ValueError("rate_cap_bps must be positive when set")


@dataclass(frozen=True)
class WindowLimit:
    """A socket-buffer size and round-trip time that bound one stream's rate."""

    buffer_bytes: int
    rtt_s: float

    def __post_init__(self) -> None:
        if self.buffer_bytes <= 0 or self.rtt_s <= 0:
            raise ValueError("buffer_bytes and rtt_s must be positive")


def _log_fraction(w: float, params: CcParams) -> float:
    """Position of w between the anchors on a log scale, in [0, 1]."""
    return (math.log(w) - math.log(params.low_window)) / (
        math.log(params.high_window) - math.log(params.low_window)
    )


def hstcp_b(w: float, params: CcParams = CcParams()) -> float:
    """HighSpeed multiplicative-decrease fraction b(w).

    0.5 at or below low_window (standard halving), high_decrease at or
    above high_window, log-linear in between.  Monotone non-increasing.
    """
    if w < 1.0:
        raise DomainError("window must be >= 1 segment")
    if w <= params.low_window:
        return 0.5
    if w >= params.high_window:
        return params.high_decrease
    return 0.5 + (params.high_decrease - 0.5) * _log_fraction(w, params)


def response_loss_rate(w: float, params: CcParams = CcParams()) -> float:
    """Steady-state loss rate p(w) of the HighSpeed response function.

    Log-log linear through (low_window, 1.5/low_window^2) and
    (high_window, high_p); strictly decreasing.  Defined for
    w >= low_window only.
    """
    if w < params.low_window:
        raise DomainError(
            f"response function defined for w >= {params.low_window}, got {w}"
        )
    p_low = 1.5 / (params.low_window * params.low_window)
    return math.exp(
        math.log(p_low)
        + _log_fraction(w, params) * (math.log(params.high_p) - math.log(p_low))
    )


def hstcp_a(w: float, params: CcParams = CcParams()) -> float:
    """HighSpeed additive increase a(w), in segments per RTT.

    1 at or below low_window; above it,
    a(w) = w^2 * p(w) * 2*b(w) / (2 - b(w)),
    which is continuous at low_window and monotone non-decreasing.
    """
    if w < 1.0:
        raise DomainError("window must be >= 1 segment")
    if w <= params.low_window:
        return 1.0
    b = hstcp_b(w, params)
    return w * w * response_loss_rate(w, params) * 2.0 * b / (2.0 - b)


def decrease_fraction(w: float, params: CcParams) -> float:
    """Per-loss decrease fraction for the configured variant (Reno: 0.5)."""
    if params.variant == RENO:
        return 0.5
    return hstcp_b(w, params)


def additive_increase(w: float, params: CcParams) -> float:
    """Per-RTT congestion-avoidance increase for the variant (Reno: 1)."""
    if params.variant == RENO:
        return 1.0
    return hstcp_a(w, params)


def rate_cap_window(rate_cap_bps: float, rtt_s: float, mss_bytes: int) -> float:
    """Largest window (segments) whose per-RTT sending rate stays at or under the cap."""
    return rate_cap_bps * rtt_s / (8.0 * mss_bytes)


def on_rtt_ack(state: CcState, params: CcParams, rtt_s: float | None = None) -> CcState:
    """Advance one loss-free round trip.

    Slow start doubles the window until ssthresh, then congestion
    avoidance adds a(cwnd) segments per RTT (1 for Reno).  When the state
    carries a rate cap and rtt_s is given, the window is clamped so
    cwnd * mss * 8 / rtt never exceeds the cap.
    """
    if state.mode == SLOW_START:
        cwnd = state.cwnd * 2.0
        mode = SLOW_START
        if cwnd >= state.ssthresh:
            cwnd = min(cwnd, state.ssthresh)
            mode = CONGESTION_AVOIDANCE
    else:
        cwnd = state.cwnd + additive_increase(state.cwnd, params)
        mode = CONGESTION_AVOIDANCE
    if state.rate_cap_bps is not None and rtt_s is not None:
        cwnd = min(cwnd, rate_cap_window(state.rate_cap_bps, rtt_s, params.mss_bytes))
    return replace(state, cwnd=max(cwnd, 1.0), mode=mode)


def on_loss(state: CcState, params: CcParams) -> CcState:
    """Apply one loss event: multiplicative decrease by b(cwnd), enter avoidance."""
    b = decrease_fraction(state.cwnd, params)
    cwnd = max(1.0, state.cwnd * (1.0 - b))
    return replace(
        state,
        cwnd=cwnd,
        ssthresh=max(2.0, cwnd),
        mode=CONGESTION_AVOIDANCE,
    )


def window_limited_throughput(limit: WindowLimit) -> float:
    """Peak rate in bits/s of one window-limited stream: buffer * 8 / rtt."""
    return limit.buffer_bytes * 8.0 / limit.rtt_s
