"""Re-entrant retransmission system over a lossy link.

Traffic that fails transmission (probability p per attempt) re-enters its
queue after a detection wait W, at the next retransmission level; higher
levels are served first. Level i therefore sees the queue's service curve
minus the aggregate of all higher levels, and its arrival curve is the
previous level's output traffic pushed through the loss envelope and
shifted by the wait:

    beta_i  = residual(beta, sum of alpha_{i+1..N})
    alpha_i = deconvolve_delay(apply_scaling(S, deconvolve(alpha_{i-1}, beta_{i-1})), W)

The system is circular (alpha_i depends on beta_{i-1}, which depends on
alpha_k for k >= i), so it is solved by fixed-point iteration on the bursts,
starting from zero. Level rates are fixed by structure (rate_i = p**i *
rate_0: scaling multiplies rates by p, deconvolutions preserve them), so
only the bursts iterate; the updates are monotone, hence the bursts grow
toward the fixed point. The equations are affine in the bursts, which the
test suite exploits as an independent direct linear solve.

The delay bound is the horizontal deviation of the aggregate arrival curve
(all levels summed) against the queue's full service curve, and it holds
with probability at least (1 - epsilon)**N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .algebra import (
    DelayElement,
    RateLatency,
    ScalingCurve,
    TokenBucket,
    apply_scaling,
    deconvolve_delay,
    deconvolve_tb_rl,
    hdev,
    residual,
    sum_tb,
)
from .pwl import INF


@dataclass(frozen=True)
class ChannelConfig:
    """Lossy-link parameters: per-attempt loss probability p, violation
    probability epsilon of the loss envelope, maximum number of
    retransmissions, and the loss-detection wait."""

    p: float | None
    epsilon: float
    max_retx: int
    detect_wait: float

    def __post_init__(self) -> None:
        if self.p is not None:
            object.__setattr__(self, "p", float(self.p))
            if not 0.0 <= self.p <= 1.0:
                raise ValueError("loss probability must be in [0, 1]")
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "detect_wait", float(self.detect_wait))
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("violation probability must be in (0, 1)")
        if int(self.max_retx) != self.max_retx or self.max_retx < 0:
            raise ValueError("max_retx must be a nonnegative integer")
        object.__setattr__(self, "max_retx", int(self.max_retx))
        if not self.detect_wait >= 0.0 or not math.isfinite(self.detect_wait):
            raise ValueError("detect_wait must be finite and >= 0")

    def require_p(self) -> float:
        if self.p is None:
            raise ValueError("channel loss probability p is not set")
        return self.p


@dataclass(frozen=True)
class RtxSolution:
    """Converged per-level arrival curves (index 0 is the input flow),
    per-level residual services (None when unstable), their aggregate, the
    stability flag and the iteration count."""

    arrivals: tuple[TokenBucket, ...]
    services: tuple[RateLatency, ...] | None
    aggregate: TokenBucket
    stable: bool
    iterations: int


@dataclass(frozen=True)
class DelayBoundResult:
    """Delay bound, the probability it holds, and the solved system."""

    bound: float
    reliability: float
    solution: RtxSolution


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    margin: float


class NonConvergenceError(Exception):
    """Fixed point not reached within max_iter; carries the last iterate."""

    def __init__(self, last: RtxSolution):
        super().__init__(f"no fixed point after {last.iterations} iterations")
        self.last = last


def _level_rates(a0: TokenBucket, p: float, n: int) -> list[float]:
    return [a0.rate * p**i for i in range(n + 1)]


def unstable_solution(a0: TokenBucket, ch: ChannelConfig) -> RtxSolution:
    """Placeholder solution for an infeasible system: level bursts have no
    finite fixed point, so they are +inf and the bound becomes +inf."""
    rates = _level_rates(a0, ch.require_p(), ch.max_retx)
    arrivals = (a0,) + tuple(TokenBucket(r, INF) for r in rates[1:])
    return RtxSolution(
        arrivals=arrivals,
        services=None,
        aggregate=TokenBucket(sum(rates), INF),
        stable=False,
        iterations=0,
    )


def stability_check(beta: RateLatency, a0: TokenBucket, ch: ChannelConfig) -> StabilityReport:
    """Necessary precheck: the summed level rates must stay strictly below
    the service rate. The margin is rate minus that sum; a nonpositive
    margin predicts solver instability. The condition is not sufficient:
    with a thin margin and p close to 1 the burst recursion's loop gain can
    exceed 1, which the solver detects as divergence."""
    total = sum(_level_rates(a0, ch.require_p(), ch.max_retx))
    return StabilityReport(stable=total < beta.rate, margin=beta.rate - total)


def solve_rtx(
    beta: RateLatency,
    a0: TokenBucket,
    ch: ChannelConfig,
    tol: float = 1e-12,
    max_iter: int = 1000,
) -> RtxSolution:
    """Solve the retransmission system against service curve ``beta`` for the
    input flow ``a0``. Returns an unstable solution (bursts +inf) instead of
    raising when the rate precheck fails, so parameter sweeps can continue
    past infeasible points. Raises :class:`NonConvergenceError` when the
    bursts are still moving after ``max_iter`` sweeps."""
    if tol <= 0.0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    p = ch.require_p()
    n = ch.max_retx
    if not stability_check(beta, a0, ch).stable or math.isinf(beta.latency):
        return unstable_solution(a0, ch)

    rates = _level_rates(a0, p, n)
    bursts = [a0.burst] + [0.0] * n
    if n == 0:
        return RtxSolution(
            arrivals=(a0,),
            services=(beta,),
            aggregate=a0,
            stable=True,
            iterations=0,
        )

    sc = ScalingCurve(p, ch.epsilon)
    wait = DelayElement(ch.detect_wait)

    def interference(i: int) -> TokenBucket:
        # aggregate of levels above i (empty sum -> zero bucket)
        return TokenBucket(sum(rates[i + 1 :]), sum(bursts[i + 1 :]))

    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        delta = 0.0
        beta_prev = residual(beta, interference(0))
        for i in range(1, n + 1):
            shifted = deconvolve_tb_rl(TokenBucket(rates[i - 1], bursts[i - 1]), beta_prev)
            new = deconvolve_delay(apply_scaling(sc, shifted), wait)
            if new.burst > 1e150:
                # monotone iteration escaping any physical scale: the burst
                # recursion has no finite fixed point (rate margin too thin
                # for the loss feedback), which is instability in practice
                return unstable_solution(a0, ch)
            delta = max(delta, abs(new.burst - bursts[i]))
            bursts[i] = new.burst  # rate is p**i * rate_0 by construction
            beta_prev = residual(beta, interference(i))
        if delta < tol:
            converged = True
            break

    arrivals = tuple(TokenBucket(r, b) for r, b in zip(rates, bursts))
    services = tuple(residual(beta, interference(i)) for i in range(n + 1))
    solution = RtxSolution(
        arrivals=arrivals,
        services=services,
        aggregate=sum_tb(arrivals),
        stable=converged,
        iterations=iterations,
    )
    if not converged:
        raise NonConvergenceError(solution)
    return solution


def delay_bound(sol: RtxSolution, beta: RateLatency, ch: ChannelConfig) -> DelayBoundResult:
    """Bound the delay of the aggregate arrivals against the queue's full
    service curve; unstable solutions yield +inf. The bound holds with
    probability at least ``(1 - epsilon) ** max_retx``."""
    bound = hdev(sol.aggregate, beta) if sol.stable else INF
    return DelayBoundResult(
        bound=bound,
        reliability=(1.0 - ch.epsilon) ** ch.max_retx,
        solution=sol,
    )
