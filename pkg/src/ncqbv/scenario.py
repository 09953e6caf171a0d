"""Full experiment assembly: map queue roles to service curves, chain the
high-to-low priority dependency, run loss-probability sweeps and emit result
tables."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .algebra import InstabilityError, RateLatency, TokenBucket
from .gates import GateConfig, Priority, affine_envelope, hp_service, lp_service
from .pwl import csv_number
from .rtx import (
    ChannelConfig,
    DelayBoundResult,
    NonConvergenceError,
    RtxSolution,
    delay_bound,
    solve_rtx,
    unstable_solution,
)

HP_MODE_ORIGINAL = "original"
HP_MODE_AGGREGATE = "aggregate"


@dataclass(frozen=True)
class QueueSpec:
    """One queue: its gate, role, input flow and maximum packet size."""

    name: str
    gate: GateConfig
    priority: Priority
    flow: TokenBucket
    l_max: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("queue name must be nonempty")
        object.__setattr__(self, "priority", Priority(self.priority))
        object.__setattr__(self, "l_max", float(self.l_max))
        if math.isnan(self.l_max) or self.l_max < 0.0:
            raise ValueError("l_max must be >= 0")


@dataclass(frozen=True)
class ScenarioOptions:
    """Solver options. ``hp_interference_mode`` selects what bounds the
    high-priority traffic inside the low-priority service curve: the
    configured flow ("original") or the solved high-priority aggregate
    including retransmissions ("aggregate", the default, since those
    retransmissions also consume the shared windows)."""

    hp_interference_mode: str = HP_MODE_AGGREGATE
    tol: float = 1e-12
    max_iter: int = 1000

    def __post_init__(self) -> None:
        if self.hp_interference_mode not in (HP_MODE_ORIGINAL, HP_MODE_AGGREGATE):
            raise ValueError(
                f"unknown hp_interference_mode {self.hp_interference_mode!r}"
            )
        if self.tol <= 0.0 or self.max_iter < 1:
            raise ValueError("tol must be > 0 and max_iter >= 1")


@dataclass(frozen=True)
class Scenario:
    """A full experiment: shared link capacity, channel parameters and the
    queue set. At most one high/low priority pair is allowed and the two
    must appear together; any number of solo queues may ride alongside."""

    capacity: float
    channel: ChannelConfig
    queues: tuple[QueueSpec, ...]
    options: ScenarioOptions = field(default_factory=ScenarioOptions)

    def __post_init__(self) -> None:
        object.__setattr__(self, "capacity", float(self.capacity))
        object.__setattr__(self, "queues", tuple(self.queues))
        if self.capacity <= 0.0:
            raise ValueError("capacity must be > 0")
        if not self.queues:
            raise ValueError("scenario needs at least one queue")
        names = [q.name for q in self.queues]
        if len(set(names)) != len(names):
            raise ValueError("queue names must be unique")
        for q in self.queues:
            if q.gate.capacity != self.capacity:
                raise ValueError(
                    f"queue {q.name!r} gate capacity {q.gate.capacity} differs "
                    f"from scenario capacity {self.capacity}"
                )
        highs = [q for q in self.queues if q.priority is Priority.HIGH]
        lows = [q for q in self.queues if q.priority is Priority.LOW]
        if len(highs) > 1 or len(lows) > 1:
            raise ValueError("at most one high and one low priority queue")
        if bool(highs) != bool(lows):
            raise ValueError("high and low priority queues must appear together")

    def high_queue(self) -> QueueSpec | None:
        for q in self.queues:
            if q.priority is Priority.HIGH:
                return q
        return None

    def low_queue(self) -> QueueSpec | None:
        for q in self.queues:
            if q.priority is Priority.LOW:
                return q
        return None


@dataclass(frozen=True)
class SweepRow:
    p: float
    queue: str
    bound: float
    reliability: float
    stable: bool
    agg_rate: float
    agg_burst: float


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    def for_queue(self, name: str) -> list[SweepRow]:
        return [r for r in self.rows if r.queue == name]

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(
            ["p", "queue", "bound", "reliability", "stable", "agg_rate", "agg_burst"]
        )
        for r in self.rows:
            writer.writerow(
                [
                    csv_number(r.p),
                    r.queue,
                    csv_number(r.bound),
                    csv_number(r.reliability),
                    "true" if r.stable else "false",
                    csv_number(r.agg_rate),
                    csv_number(r.agg_burst),
                ]
            )


def _channel_at(s: Scenario, p: float | None) -> ChannelConfig:
    if p is None:
        p = s.channel.require_p()
    return replace(s.channel, p=float(p))


def _solve(beta: RateLatency, flow: TokenBucket, ch: ChannelConfig, opts: ScenarioOptions) -> RtxSolution:
    # a diverging fixed point is recorded as instability so sweeps continue
    try:
        return solve_rtx(beta, flow, ch, tol=opts.tol, max_iter=opts.max_iter)
    except NonConvergenceError as exc:
        return replace(exc.last, stable=False)


def build_service_curves(s: Scenario, p: float | None = None) -> dict[str, RateLatency]:
    """Service curve per queue: solo queues get the gate envelope, the high
    side gets the envelope delayed by the low side's maximum packet, and the
    low side gets the residual after the high-priority traffic. In aggregate
    mode the high-priority system is solved first (which requires p).
    Propagates :class:`UnstableError` when the low side has no service."""
    high, low = s.high_queue(), s.low_queue()
    curves: dict[str, RateLatency] = {}
    hp_bound: TokenBucket | None = None
    if high is not None:
        hp_curve = hp_service(high.gate, low.l_max)
        curves[high.name] = hp_curve
        if s.options.hp_interference_mode == HP_MODE_AGGREGATE:
            ch = _channel_at(s, p)
            hp_sol = _solve(hp_curve, high.flow, ch, s.options)
            hp_bound = hp_sol.aggregate
        else:
            hp_bound = high.flow
    for q in s.queues:
        if q.priority is Priority.SOLO:
            curves[q.name] = affine_envelope(q.gate)
        elif q.priority is Priority.LOW:
            curves[q.name] = lp_service(q.gate, hp_bound)
    return {q.name: curves[q.name] for q in s.queues}


def evaluate(s: Scenario, p: float | None = None) -> dict[str, DelayBoundResult]:
    """Solve every queue at loss probability p (falling back to the channel's
    configured p). Per-queue instability is recorded in the result rather
    than raised, and evaluation continues with the remaining queues."""
    ch = _channel_at(s, p)
    results: dict[str, DelayBoundResult] = {}
    high, low = s.high_queue(), s.low_queue()

    hp_sol: RtxSolution | None = None
    if high is not None:
        hp_curve = hp_service(high.gate, low.l_max)
        hp_sol = _solve(hp_curve, high.flow, ch, s.options)

    for q in s.queues:
        if q.priority is Priority.HIGH:
            results[q.name] = delay_bound(hp_sol, hp_service(q.gate, low.l_max), ch)
            continue
        if q.priority is Priority.LOW:
            interferer = (
                hp_sol.aggregate
                if s.options.hp_interference_mode == HP_MODE_AGGREGATE
                else high.flow
            )
            try:
                beta = lp_service(q.gate, interferer)
            except InstabilityError:
                results[q.name] = delay_bound(unstable_solution(q.flow, ch), affine_envelope(q.gate), ch)
                continue
            results[q.name] = delay_bound(_solve(beta, q.flow, ch, s.options), beta, ch)
            continue
        beta = affine_envelope(q.gate)
        results[q.name] = delay_bound(_solve(beta, q.flow, ch, s.options), beta, ch)
    return results


def sweep(
    s: Scenario,
    p_from: float,
    p_to: float,
    p_step: float,
    max_workers: int = 1,
) -> SweepResult:
    """Evaluate the scenario on a regular grid of loss probabilities
    (endpoints included). Rows are ordered by (p, queue name) regardless of
    how many workers computed them, so output is deterministic."""
    if not (0.0 <= p_from <= p_to <= 1.0):
        raise ValueError("need 0 <= p_from <= p_to <= 1")
    if p_step <= 0.0:
        raise ValueError("p_step must be > 0")
    count = int(math.floor((p_to - p_from) / p_step + 1e-9)) + 1
    ps = [round(p_from + k * p_step, 12) for k in range(count)]

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            evaluations = list(pool.map(lambda p: evaluate(s, p), ps))
    else:
        evaluations = [evaluate(s, p) for p in ps]

    rows: list[SweepRow] = []
    for p, results in zip(ps, evaluations):
        for name in sorted(results):
            res = results[name]
            rows.append(
                SweepRow(
                    p=p,
                    queue=name,
                    bound=res.bound,
                    reliability=res.reliability,
                    stable=res.solution.stable,
                    agg_rate=res.solution.aggregate.rate,
                    agg_burst=res.solution.aggregate.burst,
                )
            )
    return SweepResult(rows=tuple(rows))


def oracle_grid(s: Scenario) -> tuple[float, float]:
    """Default (horizon, step) for grid-oracle cross-checks of this scenario:
    the horizon covers ten of the longest gate cycles plus detection waits,
    the step resolves the smallest gate feature."""
    periods = [q.gate.period for q in s.queues]
    wait = s.channel.detect_wait
    horizon = 10.0 * (max(periods) + wait)
    features = [1.0]
    for q in s.queues:
        features.append(q.gate.open)
        if q.gate.closed > 0.0:
            features.append(q.gate.closed)
    if wait > 0.0:
        features.append(wait)
    return horizon, min(features) / 100.0
