"""Exact min-plus algebra on the closed affine curve family.

The family is: token buckets (affine arrival curves), rate-latency service
curves, pure-delay elements, and the affine loss-scaling envelope
``S(b) = p*b + 1 - epsilon``. Every operation below maps family members to
family members or raises a typed instability error; nothing silently
produces a curve outside the family. Each closed form is cross-checked
against the grid oracle in :mod:`ncqbv.pwl` by the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import pwl
from .pwl import INF, PwlCurve


class InstabilityError(Exception):
    """A requested curve does not exist because rates are incompatible."""


class UnboundedError(InstabilityError):
    """Deconvolution diverges: the arrival rate exceeds the service rate."""


class UnstableError(InstabilityError):
    """Residual service is empty: interference consumes the full rate."""


@dataclass(frozen=True)
class TokenBucket:
    """Affine arrival curve: 0 at t = 0, ``burst + rate * t`` for t > 0.

    >>> TokenBucket(0.1, 0.001).rate
    0.1
    """

    rate: float
    burst: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "burst", float(self.burst))
        if math.isnan(self.rate) or self.rate < 0.0 or not math.isfinite(self.rate):
            raise ValueError("token-bucket rate must be finite and >= 0")
        if math.isnan(self.burst) or self.burst < 0.0:
            raise ValueError("token-bucket burst must be >= 0")

    def to_pwl(self) -> PwlCurve:
        if math.isinf(self.burst):
            raise ValueError("cannot convert an infinite burst to a PWL curve")
        return pwl.token_bucket(self.rate, self.burst)


@dataclass(frozen=True)
class RateLatency:
    """Rate-latency service curve ``rate * max(t - latency, 0)``."""

    rate: float
    latency: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "latency", float(self.latency))
        if not self.rate > 0.0 or not math.isfinite(self.rate):
            raise ValueError("rate-latency rate must be finite and > 0")
        if math.isnan(self.latency) or self.latency < 0.0:
            raise ValueError("rate-latency latency must be >= 0")

    def to_pwl(self) -> PwlCurve:
        if math.isinf(self.latency):
            raise ValueError("cannot convert an infinite latency to a PWL curve")
        return pwl.rate_latency(self.rate, self.latency)


@dataclass(frozen=True)
class DelayElement:
    """Pure-delay curve: 0 up to ``wait``, +inf afterwards."""

    wait: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "wait", float(self.wait))
        if math.isnan(self.wait) or self.wait < 0.0 or not math.isfinite(self.wait):
            raise ValueError("wait must be finite and >= 0")

    def to_pwl(self) -> PwlCurve:
        return pwl.delay_element(self.wait)


@dataclass(frozen=True)
class ScalingCurve:
    """Probabilistic envelope of the lost bits in a window of b bits:
    ``p * b + 1 - epsilon``, holding with probability at least 1 - epsilon."""

    p: float
    epsilon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("loss probability must be in [0, 1]")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("violation probability must be in (0, 1)")


def convolve(a: RateLatency, b: RateLatency) -> RateLatency:
    """Min-plus convolution of two rate-latency curves: the rates take the
    minimum, the latencies add.

    >>> convolve(RateLatency(2.5, 1.0), RateLatency(4.0, 0.2))
    RateLatency(rate=2.5, latency=1.2)
    """
    return RateLatency(min(a.rate, b.rate), a.latency + b.latency)


def deconvolve_tb_rl(a: TokenBucket, s: RateLatency) -> TokenBucket:
    """Deconvolve a token bucket by a rate-latency curve: the burst grows by
    ``rate * latency``. Raises :class:`UnboundedError` when the arrival rate
    exceeds the service rate (the supremum diverges)."""
    if a.rate > s.rate:
        raise UnboundedError(
            f"arrival rate {a.rate} exceeds service rate {s.rate}; deconvolution diverges"
        )
    return TokenBucket(a.rate, a.burst + a.rate * s.latency)


def deconvolve_delay(a: TokenBucket, d: DelayElement) -> TokenBucket:
    """Deconvolve by a pure delay: shift left, i.e. the burst grows by
    ``rate * wait``."""
    return TokenBucket(a.rate, a.burst + a.rate * d.wait)


def residual(s: RateLatency, a: TokenBucket) -> RateLatency:
    """Largest rate-latency curve below ``max(s - a, 0)``: what is left of a
    server after an affine interferer is subtracted. Raises
    :class:`UnstableError` when the interferer consumes the full rate (the
    tie case included: a zero-rate service curve has no finite latency
    form)."""
    if a.rate >= s.rate:
        raise UnstableError(
            f"interfering rate {a.rate} >= service rate {s.rate}; no residual service"
        )
    if a.rate == 0.0 and a.burst == 0.0:
        return s
    return RateLatency(s.rate - a.rate, (s.rate * s.latency + a.burst) / (s.rate - a.rate))


def apply_scaling(sc: ScalingCurve, a: TokenBucket) -> TokenBucket:
    """Compose the loss envelope with a token bucket (evaluated for t > 0):
    rate scales by p, the burst becomes ``p * burst + 1 - epsilon``."""
    return TokenBucket(sc.p * a.rate, sc.p * a.burst + 1.0 - sc.epsilon)


def hdev(a: TokenBucket, s: RateLatency) -> float:
    """Horizontal deviation (delay bound): ``latency + burst / rate`` when the
    arrival rate does not exceed the service rate, else +inf.

    >>> hdev(TokenBucket(0.1, 0.001), RateLatency(2.5, 0.0))
    0.0004
    """
    if a.rate > s.rate:
        return INF
    return s.latency + a.burst / s.rate


def sum_tb(buckets) -> TokenBucket:
    """Componentwise sum of token buckets (aggregate arrival curve)."""
    buckets = list(buckets)
    if not buckets:
        raise ValueError("cannot sum an empty list of token buckets")
    return TokenBucket(
        sum(b.rate for b in buckets),
        sum(b.burst for b in buckets),
    )
