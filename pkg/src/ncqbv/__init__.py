"""Delay-bound engine for time-gated queues over a lossy link.

Library layout:

* :mod:`ncqbv.pwl` — piecewise-linear curves and the grid min-plus oracle,
* :mod:`ncqbv.algebra` — exact algebra on the affine curve family,
* :mod:`ncqbv.gates` — gate staircases and priority-share service curves,
* :mod:`ncqbv.rtx` — the retransmission fixed point and the delay bound,
* :mod:`ncqbv.scenario` — experiment assembly and sweeps,
* :mod:`ncqbv.sim` — the Monte Carlo cross-check,
* :mod:`ncqbv.cli` — the command-line front end.
"""

from .algebra import (
    DelayElement,
    InstabilityError,
    RateLatency,
    ScalingCurve,
    TokenBucket,
    UnboundedError,
    UnstableError,
    apply_scaling,
    convolve,
    deconvolve_delay,
    deconvolve_tb_rl,
    hdev,
    residual,
    sum_tb,
)
from .gates import GateConfig, Priority, affine_envelope, hp_service, lp_service, tdma_staircase
from .pwl import PwlCurve, grid_convolve, grid_deconvolve, grid_hdev
from .rtx import (
    ChannelConfig,
    DelayBoundResult,
    NonConvergenceError,
    RtxSolution,
    StabilityReport,
    delay_bound,
    solve_rtx,
    stability_check,
)
from .scenario import (
    QueueSpec,
    Scenario,
    ScenarioOptions,
    SweepResult,
    SweepRow,
    build_service_curves,
    evaluate,
    sweep,
)
from .sim import SimConfig, SimStats, run, validate_bound, validate_scaling

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "DelayBoundResult",
    "DelayElement",
    "GateConfig",
    "InstabilityError",
    "NonConvergenceError",
    "Priority",
    "PwlCurve",
    "QueueSpec",
    "RateLatency",
    "RtxSolution",
    "ScalingCurve",
    "Scenario",
    "ScenarioOptions",
    "SimConfig",
    "SimStats",
    "StabilityReport",
    "SweepResult",
    "SweepRow",
    "TokenBucket",
    "UnboundedError",
    "UnstableError",
    "apply_scaling",
    "affine_envelope",
    "build_service_curves",
    "convolve",
    "deconvolve_delay",
    "deconvolve_tb_rl",
    "delay_bound",
    "evaluate",
    "grid_convolve",
    "grid_deconvolve",
    "grid_hdev",
    "hdev",
    "hp_service",
    "lp_service",
    "residual",
    "run",
    "solve_rtx",
    "stability_check",
    "sum_tb",
    "sweep",
    "tdma_staircase",
    "validate_bound",
    "validate_scaling",
]
