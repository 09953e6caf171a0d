"""Command-line front end.

Subcommands: ``bound``, ``sweep``, ``curves``, ``simulate``,
``validate-scaling``. All delimited output is RFC-4180 CSV with ``.`` as the
decimal separator and +inf rendered as the literal ``inf``. Time and bit
units are abstract: a scenario file's numbers carry whatever unit convention
the experiment uses, consistently.

Exit codes: 0 ok, 2 scenario parse error, 3 invariant violation,
4 every computed result unstable.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict

from . import sim
from .algebra import TokenBucket
from .gates import GateConfig, Priority, affine_envelope, tdma_staircase
from .pwl import GridCurve, csv_number, time_grid
from .rtx import ChannelConfig
from .scenario import (
    QueueSpec,
    Scenario,
    ScenarioOptions,
    build_service_curves,
    evaluate,
    oracle_grid,
    sweep,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_UNSTABLE = 4


class ScenarioFileError(Exception):
    """Structural problem in a scenario file (bad JSON, missing/unknown keys)."""


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ScenarioFileError(f"missing key {key!r} in {where}")
    return obj[key]


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioFileError(f"unknown keys {sorted(unknown)} in {where}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFileError(f"{where} must be a number, got {value!r}")
    return float(value)


def parse_scenario(doc: dict) -> Scenario:
    """Build a Scenario from a parsed JSON document. Structural errors raise
    :class:`ScenarioFileError`; invariant violations raise ValueError."""
    if not isinstance(doc, dict):
        raise ScenarioFileError("scenario document must be a JSON object")
    _reject_unknown(doc, {"capacity", "channel", "queues", "options"}, "scenario")
    capacity = _number(_require(doc, "capacity", "scenario"), "capacity")

    ch = _require(doc, "channel", "scenario")
    if not isinstance(ch, dict):
        raise ScenarioFileError("channel must be an object")
    _reject_unknown(ch, {"p", "epsilon", "max_retx", "detect_wait"}, "channel")
    p = _number(ch["p"], "channel.p") if "p" in ch else None
    epsilon = _number(_require(ch, "epsilon", "channel"), "channel.epsilon")
    max_retx = _require(ch, "max_retx", "channel")
    if isinstance(max_retx, bool) or not isinstance(max_retx, int):
        raise ScenarioFileError("channel.max_retx must be an integer")
    detect_wait = _number(_require(ch, "detect_wait", "channel"), "channel.detect_wait")
    channel = ChannelConfig(p=p, epsilon=epsilon, max_retx=max_retx, detect_wait=detect_wait)

    raw_queues = _require(doc, "queues", "scenario")
    if not isinstance(raw_queues, list) or not raw_queues:
        raise ScenarioFileError("queues must be a nonempty array")
    queues = []
    for i, rq in enumerate(raw_queues):
        where = f"queues[{i}]"
        if not isinstance(rq, dict):
            raise ScenarioFileError(f"{where} must be an object")
        _reject_unknown(rq, {"name", "gate", "priority", "flow", "l_max"}, where)
        name = _require(rq, "name", where)
        if not isinstance(name, str):
            raise ScenarioFileError(f"{where}.name must be a string")
        gate = _require(rq, "gate", where)
        if not isinstance(gate, dict):
            raise ScenarioFileError(f"{where}.gate must be an object")
        _reject_unknown(gate, {"open", "closed", "offset"}, f"{where}.gate")
        gate_cfg = GateConfig(
            open=_number(_require(gate, "open", f"{where}.gate"), "gate.open"),
            closed=_number(_require(gate, "closed", f"{where}.gate"), "gate.closed"),
            offset=_number(_require(gate, "offset", f"{where}.gate"), "gate.offset"),
            capacity=capacity,
        )
        priority = _require(rq, "priority", where)
        if priority not in ("high", "low", "solo"):
            raise ScenarioFileError(f"{where}.priority must be high, low or solo")
        flow = _require(rq, "flow", where)
        if not isinstance(flow, dict):
            raise ScenarioFileError(f"{where}.flow must be an object")
        _reject_unknown(flow, {"rate", "burst"}, f"{where}.flow")
        tb = TokenBucket(
            _number(_require(flow, "rate", f"{where}.flow"), "flow.rate"),
            _number(_require(flow, "burst", f"{where}.flow"), "flow.burst"),
        )
        l_max = _number(_require(rq, "l_max", where), f"{where}.l_max")
        queues.append(
            QueueSpec(name=name, gate=gate_cfg, priority=Priority(priority), flow=tb, l_max=l_max)
        )

    opts = doc.get("options", {})
    if not isinstance(opts, dict):
        raise ScenarioFileError("options must be an object")
    _reject_unknown(opts, {"hp_interference_mode", "tol", "max_iter"}, "options")
    kwargs = {}
    if "hp_interference_mode" in opts:
        mode = opts["hp_interference_mode"]
        if not isinstance(mode, str):
            raise ScenarioFileError("options.hp_interference_mode must be a string")
        kwargs["hp_interference_mode"] = mode
    if "tol" in opts:
        kwargs["tol"] = _number(opts["tol"], "options.tol")
    if "max_iter" in opts:
        max_iter = opts["max_iter"]
        if isinstance(max_iter, bool) or not isinstance(max_iter, int):
            raise ScenarioFileError("options.max_iter must be an integer")
        kwargs["max_iter"] = max_iter
    options = ScenarioOptions(**kwargs)

    return Scenario(capacity=capacity, channel=channel, queues=tuple(queues), options=options)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ScenarioFileError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"invalid JSON in {path}: {exc}") from exc
    return parse_scenario(doc)


def scenario_to_dict(s: Scenario) -> dict:
    """Normalized document: every effective field explicit, defaults included."""
    channel: dict = {}
    if s.channel.p is not None:
        channel["p"] = s.channel.p
    channel.update(
        epsilon=s.channel.epsilon,
        max_retx=s.channel.max_retx,
        detect_wait=s.channel.detect_wait,
    )
    return {
        "capacity": s.capacity,
        "channel": channel,
        "queues": [
            {
                "name": q.name,
                "gate": {"open": q.gate.open, "closed": q.gate.closed, "offset": q.gate.offset},
                "priority": q.priority.value,
                "flow": {"rate": q.flow.rate, "burst": q.flow.burst},
                "l_max": q.l_max,
            }
            for q in s.queues
        ],
        "options": asdict(s.options),
    }


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("NCQBV_THREADS", "1")))
    except ValueError:
        return 1


def _resolve_p(s: Scenario, override: float | None) -> float:
    if override is not None:
        return override
    if s.channel.p is None:
        raise ValueError("scenario file has no channel.p; pass --p")
    return s.channel.p


def cmd_bound(args) -> int:
    s = load_scenario(args.scenario)
    if args.dump_normalized:
        text = json.dumps(scenario_to_dict(s), indent=2, sort_keys=True)
        if args.dump_normalized == "-":
            print(text)
        else:
            with open(args.dump_normalized, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return EXIT_OK
    p = _resolve_p(s, args.p)
    results = evaluate(s, p)
    print(f"p = {csv_number(p)}")
    print(f"{'queue':<16} {'bound':>14} {'reliability':>12} {'stable':>7}")
    for name, res in results.items():
        bound = "inf" if math.isinf(res.bound) else f"{res.bound:.6g}"
        print(f"{name:<16} {bound:>14} {res.reliability:>12.5f} {'yes' if res.solution.stable else 'no':>7}")
    if all(not res.solution.stable for res in results.values()):
        return EXIT_UNSTABLE
    return EXIT_OK


def cmd_sweep(args) -> int:
    s = load_scenario(args.scenario)
    if os.path.exists(args.out) and not args.force:
        print(f"refusing to overwrite {args.out} (use --force)", file=sys.stderr)
        return EXIT_INVARIANT
    result = sweep(s, args.p_from, args.p_to, args.p_step, max_workers=_workers())
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        result.write_csv(fh)
    meta = {
        "scenario": scenario_to_dict(s),
        "p_from": args.p_from,
        "p_to": args.p_to,
        "p_step": args.p_step,
    }
    print(json.dumps(meta, sort_keys=True))
    if args.fig:
        from . import plotting

        plotting.plot_sweep(result, args.fig)
    if all(not r.stable for r in result.rows):
        return EXIT_UNSTABLE
    return EXIT_OK


def cmd_curves(args) -> int:
    s = load_scenario(args.scenario)
    default_horizon, default_step = oracle_grid(s)
    horizon = args.horizon if args.horizon is not None else default_horizon
    step = args.step if args.step is not None else default_step
    times = time_grid(horizon, step)
    p = args.p if args.p is not None else s.channel.p
    services = build_service_curves(s, p)
    os.makedirs(args.out_dir, exist_ok=True)
    overlay: dict[str, tuple] = {}
    for q in s.queues:
        cycles = max(1, math.ceil((horizon - q.gate.offset) / q.gate.period) + 1)
        named = {
            "staircase": tdma_staircase(q.gate, cycles=cycles).sample(times),
            "envelope": affine_envelope(q.gate).to_pwl().sample(times),
            "service": services[q.name].to_pwl().sample(times),
        }
        for kind, values in named.items():
            path = os.path.join(args.out_dir, f"{q.name}_{kind}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                GridCurve(times=times, values=values).write_csv(fh)
            overlay[f"{q.name} {kind}"] = (times, values)
    if args.fig:
        from . import plotting

        plotting.plot_curves(overlay, args.fig)
    return EXIT_OK


def cmd_simulate(args) -> int:
    s = load_scenario(args.scenario)
    p = _resolve_p(s, args.p)
    if args.p is not None:
        from dataclasses import replace

        s = replace(s, channel=replace(s.channel, p=args.p))
    packet = args.packet_size
    if packet is None:
        sizes = [q.l_max for q in s.queues if q.l_max > 0.0]
        if not sizes:
            raise ValueError("no positive l_max in scenario; pass --packet-size")
        packet = min(sizes)
    dt = args.dt if args.dt is not None else min(q.gate.open for q in s.queues) / 100.0
    cfg = sim.SimConfig(
        scenario=s,
        packet_size=packet,
        dt=dt,
        duration=args.duration,
        seed=args.seed,
        arrival=args.arrival,
    )
    stats = sim.run(cfg)
    bounds = {name: res.bound for name, res in evaluate(s, p).items()}
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        stats.write_csv(fh, bounds)
    if args.fig:
        from . import plotting

        plotting.plot_delays(stats, bounds, args.fig)
    return EXIT_OK


def cmd_validate_scaling(args) -> int:
    freq = sim.validate_scaling(args.p, args.eps, args.b, args.trials, seed=args.seed)
    violations = int(round(freq * args.trials))
    print(f"violation frequency: {csv_number(freq)} ({violations}/{args.trials})")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("p,epsilon,b,trials,violations,frequency\r\n")
            fh.write(
                f"{csv_number(args.p)},{csv_number(args.eps)},{args.b},"
                f"{args.trials},{violations},{csv_number(freq)}\r\n"
            )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncqbv",
        description="Delay bounds for time-gated queues over a lossy link, "
        "with a Monte Carlo cross-check.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="print per-queue delay bounds")
    b.add_argument("scenario")
    b.add_argument("--p", type=float, default=None, help="override loss probability")
    b.add_argument(
        "--dump-normalized",
        metavar="PATH",
        default=None,
        help="write the normalized scenario JSON (- for stdout) and exit",
    )
    b.set_defaults(func=cmd_bound)

    w = sub.add_parser("sweep", help="sweep the loss probability, write CSV")
    w.add_argument("scenario")
    w.add_argument("--p-from", type=float, required=True)
    w.add_argument("--p-to", type=float, required=True)
    w.add_argument("--p-step", type=float, required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--force", action="store_true", help="overwrite an existing output file")
    w.add_argument("--fig", default=None, help="also render a bound-vs-p figure")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("curves", help="dump staircase/envelope/service curve samples")
    c.add_argument("scenario")
    c.add_argument("--horizon", type=float, default=None)
    c.add_argument("--step", type=float, default=None)
    c.add_argument("--p", type=float, default=None, help="loss probability for service curves")
    c.add_argument("--out-dir", required=True)
    c.add_argument("--fig", default=None, help="also render a curve overlay figure")
    c.set_defaults(func=cmd_curves)

    m = sub.add_parser("simulate", help="run the Monte Carlo simulation, write CSV")
    m.add_argument("scenario")
    m.add_argument("--p", type=float, default=None, help="override loss probability")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--duration", type=float, required=True)
    m.add_argument("--packet-size", type=float, default=None)
    m.add_argument("--dt", type=float, default=None)
    m.add_argument("--arrival", choices=[sim.ARRIVAL_GREEDY, sim.ARRIVAL_PERIODIC],
                   default=sim.ARRIVAL_GREEDY)
    m.add_argument("--out", required=True)
    m.add_argument("--fig", default=None, help="also render delay histograms")
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate-scaling", help="measure the loss-envelope violation frequency")
    v.add_argument("--p", type=float, required=True)
    v.add_argument("--eps", type=float, required=True)
    v.add_argument("--b", type=int, required=True)
    v.add_argument("--trials", type=int, required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_validate_scaling)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
