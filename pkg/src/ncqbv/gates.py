"""Time-gated link modeling: the cumulative-service staircase of a
periodically opened gate, its affine lower envelope, and the service curves
of two queues whose gates open concurrently with strict priority."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from . import pwl
from .algebra import RateLatency, TokenBucket, UnstableError
from .pwl import PwlCurve


class Priority(str, Enum):
    """Role of a queue: alone on its gate, or the high/low side of a pair of
    concurrently opened gates."""

    HIGH = "high"
    LOW = "low"
    SOLO = "solo"


@dataclass(frozen=True)
class GateConfig:
    """One queue's gate: open for ``open`` time units, closed for ``closed``,
    first opening at ``offset``, serving at ``capacity`` bits per time unit
    while open. Full cycle = open + closed."""

    open: float
    closed: float
    offset: float
    capacity: float

    def __post_init__(self) -> None:
        for name in ("open", "closed", "offset", "capacity"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"gate {name} must be finite")
        if self.open <= 0.0:
            raise ValueError("gate open length must be > 0")
        if self.closed < 0.0 or self.offset < 0.0:
            raise ValueError("gate closed length and offset must be >= 0")
        if self.capacity <= 0.0:
            raise ValueError("link capacity must be > 0")

    @property
    def period(self) -> float:
        return self.open + self.closed


def tdma_staircase(g: GateConfig, cycles: int = 12) -> PwlCurve:
    """Cumulative service of the gate: slope ``capacity`` on every open window
    ``[offset + k*period, offset + k*period + open)``, flat while closed.

    The curve is exact on ``[0, offset + cycles*period]`` and stays flat
    afterwards; pick ``cycles`` at least as large as the span you sample.
    """
    if cycles < 1:
        raise ValueError("need at least one gate cycle")
    chunk = g.capacity * g.open  # bits served per open window
    points: list[tuple[float, float]] = [(0.0, 0.0)]
    for k in range(cycles):
        start = g.offset + k * g.period
        if start > points[-1][0]:
            points.append((start, k * chunk))
        points.append((start + g.open, (k + 1) * chunk))
    return PwlCurve(tuple(points), 0.0)


def affine_envelope(g: GateConfig) -> RateLatency:
    """Largest rate-latency curve under the gate staircase; it touches the
    staircase at the start of every open window. Rate = capacity * open /
    period, latency = the first-opening offset."""
    return RateLatency(g.capacity * g.open / g.period, g.offset)


def hp_service(g: GateConfig, l_max: float) -> RateLatency:
    """Service left to the high-priority queue of a concurrently opened pair:
    the envelope rate, delayed by one maximum-size packet of the low-priority
    queue (non-preemptive blocking)."""
    if l_max < 0.0:
        raise ValueError("maximum packet size must be >= 0")
    env = affine_envelope(g)
    return RateLatency(env.rate, g.offset + l_max / env.rate)


def lp_service(g: GateConfig, hp_arrival: TokenBucket) -> RateLatency:
    """Service left to the low-priority queue of a concurrently opened pair
    when the high-priority traffic is bounded by a token bucket. Raises
    :class:`UnstableError` when the high-priority rate consumes the whole
    envelope rate."""
    env = affine_envelope(g)
    if hp_arrival.rate >= env.rate:
        raise UnstableError(
            f"high-priority rate {hp_arrival.rate} >= envelope rate {env.rate}"
        )
    rate = env.rate - hp_arrival.rate
    return RateLatency(rate, (env.rate * g.offset + hp_arrival.burst) / rate)
