"""Core value types shared by every part of the simulator.

Times are integer seconds relative to the earliest timestamp of the
dataset. Jobs occupy half-open intervals [start, end), so a job ending
at t and a job starting at t may hand over the same nodes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace


class BoundaryFlag(str, enum.Enum):
    """Marks jobs that span an edge of the simulation window."""

    NONE = "none"
    STARTED_BEFORE_WINDOW = "started_before_window"
    ENDS_AFTER_WINDOW = "ends_after_window"

    def __str__(self) -> str:
        return self.value


class ConfigError(ValueError):
    """Raised when a system config violates one or more invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True, slots=True)
class SimWindow:
    """Half-open simulation interval [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"window start {self.start} exceeds end {self.end}")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, slots=True)
class JobTimes:
    """Recorded timing of one job.

    start/end are present for workloads captured from telemetry and
    absent for synthetic reschedule-only workloads. telemetry_start and
    telemetry_end bound the utilization trace, which may not coincide
    with the job's own start and end.
    """

    submit: int
    start: int | None = None
    end: int | None = None
    wall_limit: int = 1
    telemetry_start: int | None = None
    telemetry_end: int | None = None

    def __post_init__(self):
        if self.wall_limit <= 0:
            raise ValueError(f"wall_limit must be positive, got {self.wall_limit}")
        if self.start is not None and self.submit > self.start:
            raise ValueError(f"submit {self.submit} is after start {self.start}")
        if self.start is not None and self.end is not None and self.start >= self.end:
            raise ValueError(f"start {self.start} is not before end {self.end}")
        if (
            self.telemetry_start is not None
            and self.telemetry_end is not None
            and self.telemetry_start > self.telemetry_end
        ):
            raise ValueError("telemetry_start is after telemetry_end")

    @property
    def duration(self) -> int | None:
        if self.start is None or self.end is None:
            return None
        return self.end - self.start


@dataclass(frozen=True, slots=True)
class UtilizationTrace:
    """Sampled utilization of one job, piecewise constant between samples."""

    sample_times: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if not self.sample_times:
            raise ValueError("trace must be nonempty")
        if len(self.sample_times) != len(self.values):
            raise ValueError("trace times and values differ in length")
        if any(b <= a for a, b in zip(self.sample_times, self.sample_times[1:])):
            raise ValueError("trace times must be strictly ascending")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("trace values must lie in [0, 1]")


@dataclass(frozen=True, slots=True)
class Job:
    """One schedulable unit.

    Jobs are immutable; equality and identity follow the integer id.
    nodes_assigned carries the exact recorded placement for replay;
    scalar_avg_util stands in for a trace when only a summary exists.
    """

    id: int
    account_id: str
    times: JobTimes
    nodes_requested: int
    nodes_assigned: tuple[int, ...] | None = None
    priority: int = 0
    trace: UtilizationTrace | None = None
    scalar_avg_util: float | None = None
    score: float | None = None
    boundary_flag: BoundaryFlag = BoundaryFlag.NONE

    def __post_init__(self):
        if self.nodes_requested < 1:
            raise ValueError(f"job {self.id}: nodes_requested must be >= 1")
        if self.nodes_assigned is not None:
            if len(self.nodes_assigned) != self.nodes_requested:
                raise ValueError(
                    f"job {self.id}: assigned-node count {len(self.nodes_assigned)}"
                    f" != nodes_requested {self.nodes_requested}"
                )
            if len(set(self.nodes_assigned)) != len(self.nodes_assigned):
                raise ValueError(f"job {self.id}: assigned node ids repeat")
        if self.scalar_avg_util is not None and not 0.0 <= self.scalar_avg_util <= 1.0:
            raise ValueError(f"job {self.id}: scalar_avg_util outside [0, 1]")

    @property
    def submit(self) -> int:
        return self.times.submit

    @property
    def start(self) -> int | None:
        return self.times.start

    @property
    def end(self) -> int | None:
        return self.times.end

    @property
    def wall_limit(self) -> int:
        return self.times.wall_limit

    def with_flag(self, flag: BoundaryFlag) -> "Job":
        return replace(self, boundary_flag=flag)

    def with_score(self, score: float) -> "Job":
        return replace(self, score=score)


@dataclass(frozen=True, slots=True)
class CoolingParams:
    """First-order proxy for the facility's cooling loop.

    return temperature relaxes toward supply_temp + facility/flow_heat_capacity
    with time constant thermal_mass_tau; cooling draw is affine in facility power.
    """

    supply_temp: float = 20.0
    thermal_mass_tau: float = 600.0
    flow_heat_capacity: float = 2000.0
    cooling_overhead_static: float = 0.0
    cooling_overhead_slope: float = 0.06


@dataclass(frozen=True, slots=True)
class SystemConfig:
    """Static description of the simulated system."""

    total_nodes: int = 16
    timestep: int = 15
    node_idle_watts: float = 200.0
    node_max_watts: float = 1000.0
    conversion_efficiency: float = 0.95
    cooling: CoolingParams = field(default_factory=CoolingParams)
    carbon_intensity: float = 0.4
    size_small_lt: int = 16
    size_large_ge: int = 128
    fugaku_reference_w: float | None = None
    ml_alpha: tuple[tuple[str, float], ...] = ()

    @property
    def reference_power_w(self) -> float:
        """Per-node power treated as break-even by the point incentive."""
        if self.fugaku_reference_w is not None:
            return self.fugaku_reference_w
        return self.node_idle_watts + 0.5 * (self.node_max_watts - self.node_idle_watts)


@dataclass(frozen=True, slots=True)
class Account:
    """Aggregates accumulated for one user account across completed jobs."""

    account_id: str
    jobs_completed: int = 0
    total_energy: float = 0.0
    node_seconds: float = 0.0
    avg_power: float = 0.0
    accumulated_edp: float = 0.0
    fugaku_points: float = 0.0
    priority_cache: float | None = None

    def __post_init__(self):
        for name in ("jobs_completed", "total_energy", "node_seconds", "avg_power", "accumulated_edp"):
            if getattr(self, name) < 0:
                raise ValueError(f"account {self.account_id}: {name} must be >= 0")


def config_violations(config: SystemConfig) -> list[str]:
    """Return every invariant violated by `config` (empty when valid)."""
    problems = []
    if config.total_nodes < 1:
        problems.append("total_nodes must be >= 1")
    if config.timestep < 1:
        problems.append("timestep must be >= 1")
    if not config.node_idle_watts < config.node_max_watts:
        problems.append("node_idle_watts < node_max_watts")
    if config.node_idle_watts < 0:
        problems.append("node_idle_watts must be >= 0")
    if not 0.0 < config.conversion_efficiency <= 1.0:
        problems.append("conversion_efficiency must be in (0,1]")
    if config.cooling.thermal_mass_tau <= 0:
        problems.append("thermal_mass_tau must be > 0")
    if config.cooling.flow_heat_capacity <= 0:
        problems.append("flow_heat_capacity must be > 0")
    if config.cooling.cooling_overhead_slope < 0:
        problems.append("cooling_overhead_slope must be >= 0")
    if config.carbon_intensity < 0:
        problems.append("carbon_intensity must be >= 0")
    if config.size_small_lt < 1 or config.size_large_ge <= config.size_small_lt:
        problems.append("size thresholds must satisfy 1 <= size_small_lt < size_large_ge")
    if config.fugaku_reference_w is not None and config.fugaku_reference_w <= 0:
        problems.append("fugaku_reference_w must be > 0")
    return problems


def validate_config(config: SystemConfig) -> SystemConfig:
    """Return `config` unchanged, or raise ConfigError listing all violations."""
    problems = config_violations(config)
    if problems:
        raise ConfigError(problems)
    return config
