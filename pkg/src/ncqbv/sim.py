"""Monte Carlo oracle: event-driven simulation of gated, lossy,
priority-served queues, plus a direct experiment on the loss-envelope
assumption.

Model notes, in the order they bite:

* The high/low priority pair shares one server; each solo queue gets its own
  gated server (the underlying premise is contention-free, dedicated service
  per station, with non-overlapping gates between stations).
* Service is non-preemptive. A transmission starts only if it completes
  before its gate closes; within an open window the server never idles while
  an eligible packet is queued.
* Losses are drawn per packet, not per bit (packets are the transmission
  unit); a failed packet re-enters its queue after the detection wait, at
  the next retransmission level. Higher levels are served first within a
  queue, ties broken by original arrival time. After max_retx failed
  retransmissions the packet is dropped.
* Time is event-driven with exact arithmetic; the slot width dt only
  quantizes packet arrival instants (rounding a transmission up to slots
  would silently shrink the service the analytic curves promise). dt must
  divide all gate boundaries.
* Arrival patterns: "greedy" emits the full burst at t = 0 and then packets
  at the exact constant-rate instants; "periodic" emits, at every gate-cycle
  boundary, as many packets as the token bucket allows. Both respect the
  configured token bucket. The rate-latency bounds for gated queues assume
  every busy period starts at a cycle boundary, which "periodic" satisfies
  by construction; a greedy source arriving mid-cycle can wait out a full
  closed interval and exceed those bounds.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .algebra import TokenBucket
from .gates import GateConfig, Priority
from .pwl import INF, csv_number
from .scenario import QueueSpec, Scenario

ARRIVAL_GREEDY = "greedy"
ARRIVAL_PERIODIC = "periodic"

_EPS = 1e-9
_RANK = {Priority.HIGH: 0, Priority.SOLO: 0, Priority.LOW: 1}
_MAX_PACKETS = 5_000_000


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    packet_size: float
    dt: float
    duration: float
    seed: int
    arrival: str = ARRIVAL_GREEDY
    trace: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "packet_size", float(self.packet_size))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "duration", float(self.duration))
        if self.packet_size <= 0.0:
            raise ValueError("packet size must be > 0")
        if self.dt <= 0.0 or self.duration <= 0.0:
            raise ValueError("dt and duration must be > 0")
        if self.arrival not in (ARRIVAL_GREEDY, ARRIVAL_PERIODIC):
            raise ValueError(f"unknown arrival pattern {self.arrival!r}")
        self.scenario.channel.require_p()
        tx = self.packet_size / self.scenario.capacity
        for q in self.scenario.queues:
            if tx > q.gate.open + _EPS:
                raise ValueError(
                    f"packet cannot fit in one open window of queue {q.name!r} "
                    f"(transmission time {tx} > open {q.gate.open})"
                )
            if q.priority is Priority.LOW and self.packet_size > q.l_max + _EPS:
                raise ValueError(
                    f"packet size {self.packet_size} exceeds l_max of queue {q.name!r}"
                )
            for name in ("offset", "open", "period"):
                value = getattr(q.gate, name)
                ratio = value / self.dt
                if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)):
                    raise ValueError(
                        f"dt {self.dt} does not divide gate {name} {value} of {q.name!r}"
                    )


@dataclass(frozen=True)
class TxRecord:
    queue: str
    level: int
    start: float
    end: float
    success: bool
    seq: int
    arrival: float


@dataclass(frozen=True)
class QueueStats:
    delivered: int
    dropped: int
    delays: tuple[float, ...]

    @property
    def max_delay(self) -> float:
        return max(self.delays) if self.delays else float("nan")

    @property
    def mean_delay(self) -> float:
        return float(np.mean(self.delays)) if self.delays else float("nan")

    @property
    def q999(self) -> float:
        return float(np.quantile(self.delays, 0.999)) if self.delays else float("nan")

    def violation_frequency(self, bound: float) -> float:
        if not self.delays:
            return 0.0
        return sum(1 for d in self.delays if d > bound) / len(self.delays)


@dataclass(frozen=True)
class SimStats:
    queues: dict[str, QueueStats]
    trace: tuple[TxRecord, ...] | None = None

    def violation_frequency(self, bound: float, queue: str | None = None) -> float:
        if queue is not None:
            return self.queues[queue].violation_frequency(bound)
        delays = [d for qs in self.queues.values() for d in qs.delays]
        if not delays:
            return 0.0
        return sum(1 for d in delays if d > bound) / len(delays)

    def write_csv(self, fh, bounds: dict[str, float] | None = None) -> None:
        fh.write("queue,delivered,dropped,max_delay,mean_delay,q999,violation_freq\r\n")
        for name, qs in self.queues.items():
            bound = (bounds or {}).get(name, INF)
            fh.write(
                ",".join(
                    [
                        name,
                        str(qs.delivered),
                        str(qs.dropped),
                        csv_number(qs.max_delay),
                        csv_number(qs.mean_delay),
                        csv_number(qs.q999),
                        csv_number(qs.violation_frequency(bound)),
                    ]
                )
                + "\r\n"
            )


class _Packet:
    __slots__ = ("queue", "arrival", "level", "failures", "seq")

    def __init__(self, queue: str, arrival: float, seq: int):
        self.queue = queue
        self.arrival = arrival
        self.level = 0
        self.failures = 0
        self.seq = seq


def _snap_up(t: float, dt: float) -> float:
    return math.ceil(t / dt - 1e-9) * dt


def _greedy_times(flow: TokenBucket, size: float, dt: float, duration: float) -> list[float]:
    times: list[float] = []
    j = 1
    while True:
        if j * size <= flow.burst:
            raw = 0.0
        elif flow.rate == 0.0:
            break
        else:
            raw = (j * size - flow.burst) / flow.rate
        t = _snap_up(raw, dt)
        if t > duration:
            break
        times.append(t)
        j += 1
        if j > _MAX_PACKETS:
            raise ValueError("arrival generation exceeds the packet budget")
    return times


def _periodic_times(
    flow: TokenBucket, size: float, dt: float, duration: float, period: float
) -> list[float]:
    times: list[float] = []
    tokens = flow.burst
    k = 0
    while True:
        t = _snap_up(k * period, dt)
        if t > duration:
            break
        emit = math.floor(tokens / size + 1e-12)
        times.extend([t] * emit)
        tokens -= emit * size
        tokens = min(flow.burst, tokens + flow.rate * period)
        k += 1
        if len(times) > _MAX_PACKETS:
            raise ValueError("arrival generation exceeds the packet budget")
    return times


def _gate_state(gate: GateConfig, t: float) -> tuple[bool, float]:
    """(open?, end of the current open window); closed gates report (False, _)."""
    if t < gate.offset - _EPS:
        return False, 0.0
    phase = t - gate.offset
    k = math.floor(phase / gate.period + 1e-9)
    x = phase - k * gate.period
    if x < gate.open - _EPS:
        if gate.closed == 0.0:
            return True, INF
        return True, gate.offset + k * gate.period + gate.open
    return False, 0.0


def _run_station(
    cfg: SimConfig,
    specs: list[QueueSpec],
    rng: np.random.Generator,
    delays: dict[str, list[float]],
    delivered: dict[str, int],
    dropped: dict[str, int],
    trace: list[TxRecord] | None,
) -> None:
    scn = cfg.scenario
    p = scn.channel.require_p()
    n_retx = scn.channel.max_retx
    wait = scn.channel.detect_wait
    size = cfg.packet_size
    tx = size / scn.capacity

    counter = itertools.count()
    heap: list[tuple[float, int, int, object]] = []
    # event kinds: 0 = packet (first arrival or retransmission re-entry),
    # 1 = gate window opening, 2 = transmission end
    def push(time: float, kind: int, payload) -> None:
        heapq.heappush(heap, (time, next(counter), kind, payload))

    seq = itertools.count()
    for spec in specs:
        if cfg.arrival == ARRIVAL_GREEDY:
            times = _greedy_times(spec.flow, size, cfg.dt, cfg.duration)
        else:
            times = _periodic_times(spec.flow, size, cfg.dt, cfg.duration, spec.gate.period)
        for t in times:
            push(t, 0, _Packet(spec.name, t, next(seq)))

    for gate in dict.fromkeys(spec.gate for spec in specs):
        k = 0
        while True:
            start = gate.offset + k * gate.period
            if start > cfg.duration:
                break
            push(start, 1, None)
            k += 1
            if gate.closed == 0.0:
                break  # an always-open gate needs no wake-ups

    ordered = sorted(specs, key=lambda q: _RANK[q.priority])
    queues: dict[str, list] = {spec.name: [] for spec in specs}
    busy_until = 0.0

    def try_start(t: float) -> None:
        nonlocal busy_until
        if busy_until > t + _EPS:
            return
        for spec in ordered:
            q = queues[spec.name]
            if not q:
                continue
            is_open, window_end = _gate_state(spec.gate, t)
            if not is_open or t + tx > window_end + _EPS:
                continue
            _, pkt = heapq.heappop(q)
            busy_until = t + tx
            push(busy_until, 2, pkt)
            return

    while heap:
        t, _, kind, payload = heapq.heappop(heap)
        if t > cfg.duration + _EPS:
            break
        if kind == 0:
            pkt = payload
            heapq.heappush(queues[pkt.queue], ((-pkt.level, pkt.arrival, pkt.seq), pkt))
        elif kind == 2:
            pkt = payload
            success = rng.random() >= p
            if trace is not None:
                trace.append(
                    TxRecord(pkt.queue, pkt.level, t - tx, t, success, pkt.seq, pkt.arrival)
                )
            if success:
                delivered[pkt.queue] += 1
                delays[pkt.queue].append(t - pkt.arrival)
            else:
                pkt.failures += 1
                if pkt.failures <= n_retx:
                    pkt.level = pkt.failures
                    push(t + wait, 0, pkt)
                else:
                    dropped[pkt.queue] += 1
        # serve once every simultaneous event has been absorbed
        if not heap or heap[0][0] > t + _EPS:
            try_start(t)


def run(cfg: SimConfig) -> SimStats:
    """Run the simulation; deterministic for a fixed (config, seed)."""
    scn = cfg.scenario
    pair = [q for q in scn.queues if q.priority is not Priority.SOLO]
    stations: list[list[QueueSpec]] = []
    if pair:
        stations.append(sorted(pair, key=lambda q: _RANK[q.priority]))
    stations.extend([q] for q in scn.queues if q.priority is Priority.SOLO)

    delays: dict[str, list[float]] = {q.name: [] for q in scn.queues}
    delivered = {q.name: 0 for q in scn.queues}
    dropped = {q.name: 0 for q in scn.queues}
    trace: list[TxRecord] | None = [] if cfg.trace else None

    seeds = np.random.SeedSequence(cfg.seed).spawn(len(stations))
    for specs, seed in zip(stations, seeds):
        _run_station(cfg, specs, np.random.default_rng(seed), delays, delivered, dropped, trace)

    stats = {
        q.name: QueueStats(
            delivered=delivered[q.name],
            dropped=dropped[q.name],
            delays=tuple(delays[q.name]),
        )
        for q in scn.queues
    }
    return SimStats(queues=stats, trace=tuple(trace) if trace is not None else None)


def validate_bound(cfg: SimConfig, bound: float, queue: str | None = None) -> float:
    """Fraction of delivered packets whose delay exceeds the given bound."""
    if not math.isfinite(bound):
        raise ValueError("bound must be finite")
    return run(cfg).violation_frequency(bound, queue)


def validate_scaling(
    p: float, epsilon: float, window: int, trials: int, seed: int = 0
) -> float:
    """Empirical violation probability of the loss envelope: sample a window
    of i.i.d. Bernoulli(p) losses and check every suffix subwindow against
    ``p * len + 1 - epsilon``. Returns the fraction of trials where some
    subwindow's losses exceed the envelope."""
    window = int(window)
    trials = int(trials)
    if window < 1 or trials < 1:
        raise ValueError("window and trials must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("loss probability must be in [0, 1]")
    rng = np.random.default_rng(seed)
    lengths = window - np.arange(window + 1)  # suffix lengths b - a, a = 0..b
    envelope = p * lengths + 1.0 - epsilon
    violations = 0
    chunk = max(1, min(trials, 10_000_000 // (window + 1)))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        x = (rng.random((m, window)) < p).astype(np.int64)
        prefix = np.concatenate([np.zeros((m, 1), dtype=np.int64), np.cumsum(x, axis=1)], axis=1)
        suffix = prefix[:, -1:] - prefix  # losses in positions a+1..b
        violations += int(np.any(suffix - envelope > 0.0, axis=1).sum())
        done += m
    return violations / trials
