"""Piecewise-linear curve engine with grid-based min-plus reference operations.

Curves here live in the set F of nondecreasing functions f with f(0) = 0,
taking values in [0, +inf]. A curve is stored as ordered breakpoints plus a
final slope, so every curve in this module is eventually affine. That keeps
long-run rate comparisons exact instead of heuristic.

+inf is a first-class value (needed for pure-delay elements). Arithmetic
follows the extended-real rules: x + inf = inf, min(x, inf) = x.

The grid_* functions are deliberately brute force. They sample both operands
on a regular grid and search the inf/sup numerically, which makes them a
slow but independent oracle for the closed-form algebra in
:mod:`ncqbv.algebra`. Their error is bounded by step * (combined slope of
the operands).

Curves with a jump at t = 0 (e.g. a token bucket's burst) are encoded with
a near-zero breakpoint of width JUMP_EPS; by convention the stored value at
exactly t = 0 is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

INF = float("inf")

# Width of the pseudo-jump encoding a discontinuity at t = 0. Must stay far
# below any grid step used by the oracles.
JUMP_EPS = 1e-9


@dataclass(frozen=True)
class PwlCurve:
    """Nondecreasing, eventually-affine curve: breakpoints plus final slope.

    Invariants: breakpoint times strictly increasing and finite, the first
    breakpoint is (0, 0), values are nonnegative and nondecreasing, and once
    a value is +inf the curve stays at +inf.
    """

    breakpoints: tuple[tuple[float, float], ...]
    final_slope: float

    def __post_init__(self) -> None:
        bps = tuple((float(t), float(v)) for t, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "final_slope", float(self.final_slope))
        if not bps:
            raise ValueError("a curve needs at least one breakpoint")
        if bps[0] != (0.0, 0.0):
            raise ValueError("first breakpoint must be (0, 0)")
        seen_inf = False
        prev_t = prev_v = None
        for t, v in bps:
            if not math.isfinite(t) or t < 0.0:
                raise ValueError(f"breakpoint time {t!r} must be finite and >= 0")
            if math.isnan(v) or v < 0.0:
                raise ValueError(f"breakpoint value {v!r} must be >= 0")
            if prev_t is not None:
                if t <= prev_t:
                    raise ValueError("breakpoint times must be strictly increasing")
                if v < prev_v:
                    raise ValueError("breakpoint values must be nondecreasing")
            if seen_inf and not math.isinf(v):
                raise ValueError("curve cannot come back from +inf")
            seen_inf = seen_inf or math.isinf(v)
            prev_t, prev_v = t, v
        if math.isnan(self.final_slope) or self.final_slope < 0.0:
            raise ValueError("final slope must be >= 0 (may be inf)")

    @cached_property
    def _ts(self) -> np.ndarray:
        return np.array([t for t, _ in self.breakpoints], dtype=float)

    @cached_property
    def _vs(self) -> np.ndarray:
        return np.array([v for _, v in self.breakpoints], dtype=float)

    @cached_property
    def _slopes(self) -> np.ndarray:
        # slope of the segment starting at each breakpoint; the last one is
        # the final slope
        ts, vs = self._ts, self._vs
        slopes = np.empty_like(ts)
        if len(ts) > 1:
            with np.errstate(invalid="ignore"):
                slopes[:-1] = (vs[1:] - vs[:-1]) / (ts[1:] - ts[:-1])
            # inf - inf yields nan; on an inf plateau the slope is irrelevant
            slopes[:-1] = np.nan_to_num(slopes[:-1], nan=0.0, posinf=INF)
        slopes[-1] = self.final_slope
        return slopes

    def sample(self, times) -> np.ndarray:
        """Vectorized evaluation; exact at breakpoints, linear in between,
        final-slope extrapolation after the last breakpoint."""
        t = np.asarray(times, dtype=float)
        if np.any(t < 0.0):
            raise ValueError("curves are defined for t >= 0 only")
        ts, vs = self._ts, self._vs
        idx = np.searchsorted(ts, t, side="right") - 1
        idx = np.maximum(idx, 0)
        base = vs[idx]
        dt = t - ts[idx]
        with np.errstate(invalid="ignore"):
            out = base + self._slopes[idx] * dt
        out = np.where(dt == 0.0, base, out)  # inf * 0 -> value at breakpoint
        out = np.where(np.isinf(base), base, out)
        return out

    def evaluate(self, t: float) -> float:
        """Scalar evaluation, see :meth:`sample`."""
        return float(self.sample(np.array([t]))[0])

    def first_reach(self, levels) -> np.ndarray:
        """Smallest t with curve(t) >= y, for each y (inf semantics: where the
        curve jumps to +inf, the infimum is the jump time)."""
        y = np.asarray(levels, dtype=float)
        ts, vs = self._ts, self._vs
        idx = np.searchsorted(vs, y, side="left")
        out = np.empty_like(y)
        inside = idx <= len(vs) - 1
        nonpos = y <= 0.0
        out[nonpos] = 0.0
        pick = inside & ~nonpos
        if np.any(pick):
            k = idx[pick]
            slope = self._slopes[k - 1]
            with np.errstate(invalid="ignore", divide="ignore"):
                t_hit = ts[k - 1] + (y[pick] - vs[k - 1]) / slope
            t_hit = np.where(np.isinf(slope), ts[k - 1], t_hit)
            out[pick] = t_hit
        beyond = ~inside & ~nonpos
        if np.any(beyond):
            fs = self.final_slope
            if fs == 0.0:
                out[beyond] = INF
            elif math.isinf(fs):
                out[beyond] = ts[-1]
            else:
                out[beyond] = ts[-1] + (y[beyond] - vs[-1]) / fs
        return out

    @property
    def long_run_slope(self) -> float:
        """Slope after the last breakpoint (inf once the curve is +inf)."""
        if math.isinf(self.breakpoints[-1][1]):
            return INF
        return self.final_slope


def token_bucket(rate: float, burst: float, jump_eps: float = JUMP_EPS) -> PwlCurve:
    """Token-bucket curve: 0 at t = 0, then burst + rate * t for t > 0."""
    if rate < 0.0 or burst < 0.0:
        raise ValueError("token bucket needs rate >= 0 and burst >= 0")
    if burst == 0.0:
        return PwlCurve(((0.0, 0.0),), rate)
    return PwlCurve(((0.0, 0.0), (jump_eps, burst + rate * jump_eps)), rate)


def rate_latency(rate: float, latency: float) -> PwlCurve:
    """Rate-latency curve: rate * max(t - latency, 0)."""
    if rate < 0.0 or latency < 0.0:
        raise ValueError("rate-latency needs rate >= 0 and latency >= 0")
    if latency == 0.0:
        return PwlCurve(((0.0, 0.0),), rate)
    return PwlCurve(((0.0, 0.0), (latency, 0.0)), rate)


def delay_element(wait: float) -> PwlCurve:
    """Pure delay curve: 0 up to the wait, +inf afterwards."""
    if wait < 0.0:
        raise ValueError("wait must be >= 0")
    if wait == 0.0:
        return PwlCurve(((0.0, 0.0),), INF)
    return PwlCurve(((0.0, 0.0), (wait, 0.0)), INF)


def zero_curve() -> PwlCurve:
    """The identically-zero curve (absorbing for min-plus convolution)."""
    return PwlCurve(((0.0, 0.0),), 0.0)


def csv_number(x: float) -> str:
    """Shortest round-trip decimal; +inf renders as the literal ``inf``."""
    x = float(x)
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "nan"
    return repr(x)


@dataclass(frozen=True, eq=False)
class GridCurve:
    """Samples of a curve on a regular grid, with oracle bookkeeping flags."""

    times: np.ndarray
    values: np.ndarray
    truncated: bool = False
    unbounded: bool = False

    def write_csv(self, fh) -> None:
        fh.write("t,value\r\n")
        for t, v in zip(self.times, self.values):
            fh.write(f"{csv_number(t)},{csv_number(v)}\r\n")


@dataclass(frozen=True)
class HdevEstimate:
    """Grid estimate of the horizontal deviation.

    ``truncated`` reports that the search was still improving at the horizon,
    so the true supremum may lie beyond it.
    """

    value: float
    truncated: bool = False


def time_grid(horizon: float, step: float) -> np.ndarray:
    if horizon <= 0.0 or step <= 0.0:
        raise ValueError("horizon and step must be positive")
    n = max(1, math.ceil(horizon / step - 1e-9))
    return np.arange(n + 1) * step


def grid_convolve(f: PwlCurve, g: PwlCurve, horizon: float, step: float) -> GridCurve:
    """Min-plus convolution inf_{0<=s<=t} f(t-s) + g(s), searched on the grid."""
    t = time_grid(horizon, step)
    n = len(t)
    fv = f.sample(t)
    gv = g.sample(t)
    out = np.full(n, INF)
    for j in range(n):
        if math.isinf(gv[j]):
            break  # g nondecreasing: later terms cannot improve the inf
        np.minimum(out[j:], fv[: n - j] + gv[j], out=out[j:])
    return GridCurve(times=t, values=out)


def grid_deconvolve(f: PwlCurve, g: PwlCurve, horizon: float, step: float) -> GridCurve:
    """Min-plus deconvolution sup_{u>=0} f(t+u) - g(u), with u truncated at
    the horizon. The ``unbounded`` flag is set when f's long-run slope exceeds
    g's (the true supremum diverges); ``truncated`` when the best u found was
    the horizon itself."""
    t = time_grid(horizon, step)
    n = len(t)
    f_ext = f.sample(np.arange(2 * n - 1) * step)
    gv = g.sample(t)
    out = np.full(n, -INF)
    last = 0
    for j in range(n):
        if math.isinf(gv[j]):
            break  # beyond a pure-delay horizon the term is -inf
        np.maximum(out, f_ext[j : j + n] - gv[j], out=out)
        last = j
    unbounded = f.long_run_slope > g.long_run_slope
    tail = f_ext[last : last + n] - gv[last]
    truncated = bool(not unbounded and last == n - 1 and np.any(tail >= out))
    return GridCurve(times=t, values=out, truncated=truncated, unbounded=unbounded)


def grid_hdev(alpha: PwlCurve, beta: PwlCurve, horizon: float, step: float) -> HdevEstimate:
    """Maximum horizontal distance sup_s inf{u >= 0 : alpha(s) <= beta(s+u)}.

    The outer sup runs over the grid plus alpha's breakpoints (the sup of a
    piecewise-linear gap is attained at a kink); the inner inf is resolved
    exactly by inverting beta. Returns +inf when alpha's long-run slope
    exceeds beta's.
    """
    if alpha.long_run_slope > beta.long_run_slope:
        return HdevEstimate(INF)
    s = time_grid(horizon, step)
    kinks = np.array([t for t, _ in alpha.breakpoints if 0.0 < t <= horizon])
    if len(kinks):
        s = np.union1d(s, kinks)
    a = alpha.sample(s)
    reach = beta.first_reach(a)
    dev = np.maximum(reach - s, 0.0)
    value = float(np.max(dev))
    # still at (or near) the maximum on the last candidate: the sup may
    # continue growing, or plateau, beyond the horizon
    truncated = bool(math.isfinite(value) and value > 0.0 and dev[-1] >= value - 1e-12)
    return HdevEstimate(value, truncated)
