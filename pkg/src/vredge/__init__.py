"""Discrete-event simulator of bursty cloud-VR flows over a 5G TDD edge
bottleneck, with an anchor-resident early congestion control loop and
cubic-style / rate-based / best-effort transport baselines."""

from .engine import Engine, RngStream
from .scenario import ScenarioConfig, load_config, paper_default
from .simulation import RunResult, Simulation, run_scenario, run_sweep, simulate

__all__ = [
    "Engine",
    "RngStream",
    "ScenarioConfig",
    "load_config",
    "paper_default",
    "RunResult",
    "Simulation",
    "simulate",
    "run_scenario",
    "run_sweep",
]

__version__ = "0.1.0"
