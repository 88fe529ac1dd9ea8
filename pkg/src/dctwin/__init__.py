"""Scheduling-integrated data-center twin: replay or reschedule job traces
and simulate the resulting utilization, power, and cooling response."""

from .dataloader import (
    ClippedWorkload,
    WorkloadSet,
    clip_to_window,
    load_canonical,
    load_swf,
    sample_trace,
    save_canonical,
)
from .engine import Engine, SimulationOutput, run
from .model import (
    Account,
    BoundaryFlag,
    CoolingParams,
    Job,
    JobTimes,
    SimWindow,
    SystemConfig,
    UtilizationTrace,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "Account",
    "BoundaryFlag",
    "ClippedWorkload",
    "CoolingParams",
    "Engine",
    "Job",
    "JobTimes",
    "SimWindow",
    "SimulationOutput",
    "SystemConfig",
    "UtilizationTrace",
    "WorkloadSet",
    "clip_to_window",
    "load_canonical",
    "load_swf",
    "run",
    "sample_trace",
    "save_canonical",
    "validate_config",
    "__version__",
]
