"""Agent-based simulator of multi-pathogen STD spread on a two-layer
partnership network with dating-app matching dynamics, plus a mean-field
compartment ODE used as an independent oracle in the well-mixed limit."""

__version__ = "0.1.0"

from .accel import NUMBA_ENABLED, backend_name
from .config import ConfigError, PathogenParams, SimConfig, load_config
from .engine import Agent, World, init_world, run, run_replications, step
from .metrics import MetricsSeries, ReplicationSummary, compute_rt

__all__ = [
    "Agent",
    "ConfigError",
    "MetricsSeries",
    "NUMBA_ENABLED",
    "PathogenParams",
    "ReplicationSummary",
    "SimConfig",
    "World",
    "__version__",
    "backend_name",
    "compute_rt",
    "init_world",
    "load_config",
    "run",
    "run_replications",
    "step",
]
