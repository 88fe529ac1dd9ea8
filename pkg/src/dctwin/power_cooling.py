"""Utilization-to-power conversion, conversion losses, and the cooling proxy."""

from __future__ import annotations

from dataclasses import dataclass

from .model import CoolingParams, SystemConfig


@dataclass(frozen=True, slots=True)
class PowerSnapshot:
    """Electrical and thermal state of the facility at one tick.

    facility_watts = compute_watts + loss_watts; the cooling overhead is
    carried by pue rather than folded into facility_watts. pue is None
    when the facility draws nothing (an idle facility has no meaningful
    effectiveness ratio).
    """

    t: int
    compute_watts: float
    loss_watts: float
    facility_watts: float
    utilization: float
    pue: float | None
    return_temp: float


@dataclass(frozen=True, slots=True)
class CoolingState:
    return_temp: float


def node_power(util: float, config: SystemConfig) -> float:
    """Linear power draw of one node between idle and max."""
    if not 0.0 <= util <= 1.0:
        raise ValueError(f"utilization {util} outside [0, 1]")
    return config.node_idle_watts + util * (config.node_max_watts - config.node_idle_watts)


def apply_loss(compute_watts: float, efficiency: float) -> tuple[float, float]:
    """Gross facility input and rectification/conversion loss for a compute draw."""
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"conversion efficiency {efficiency} outside (0, 1]")
    facility = compute_watts / efficiency
    return facility, facility - compute_watts


def system_power(
    job_loads: list[tuple[int, float]],
    free_nodes: int,
    config: SystemConfig,
) -> tuple[float, list[float], float]:
    """Aggregate compute power and node-occupancy utilization.

    job_loads holds (node_count, utilization) per running job; free nodes
    idle. Returns total compute watts, per-job watts (same order), and the
    occupied-node fraction.
    """
    per_job = [nodes * node_power(util, config) for nodes, util in job_loads]
    compute = sum(per_job) + free_nodes * config.node_idle_watts
    occupied = config.total_nodes - free_nodes
    return compute, per_job, occupied / config.total_nodes


def cooling_step(
    cooling: CoolingState,
    facility_watts: float,
    dt: float,
    params: CoolingParams,
) -> tuple[CoolingState, float | None, float]:
    """Advance the first-order cooling proxy by dt.

    The return temperature relaxes toward supply + facility/flow_heat_capacity
    with time constant thermal_mass_tau (update factor clamped to 1 for very
    long steps). The cooling plant draws an affine overhead of the facility
    power, so pue = 1 + overhead/facility whenever the facility draws power.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    target = params.supply_temp + facility_watts / params.flow_heat_capacity
    factor = min(dt / params.thermal_mass_tau, 1.0)
    new_temp = cooling.return_temp + factor * (target - cooling.return_temp)
    cooling_power = params.cooling_overhead_static + params.cooling_overhead_slope * facility_watts
    if facility_watts > 0:
        pue = (facility_watts + cooling_power) / facility_watts
    else:
        pue = None
    return CoolingState(new_temp), pue, new_temp
