"""Per-job, per-account, and system statistics plus account persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from . import incentives
from .model import Account, Job, SimWindow, SystemConfig

SIZE_CLASSES = ("small", "medium", "large")

ACCOUNT_FILE_KEYS = (
    "jobs_completed",
    "total_energy_j",
    "node_seconds",
    "avg_power_w",
    "accumulated_edp",
    "fugaku_points",
)


class SchemaError(ValueError):
    def __init__(self, key: str, detail: str):
        super().__init__(f"accounts file: {detail}: '{key}'")
        self.key = key


@dataclass(frozen=True, slots=True)
class JobStats:
    job_id: int
    wait: int
    turnaround: int
    runtime: int
    node_seconds: float
    energy: float
    avg_power: float
    edp: float
    ed2p: float
    size_class: str


def size_class(nodes: int, config: SystemConfig) -> str:
    if nodes < config.size_small_lt:
        return "small"
    if nodes < config.size_large_ge:
        return "medium"
    return "large"


def job_stats(job: Job, start: int, end: int, energy: float, config: SystemConfig) -> JobStats:
    """Derived metrics for one simulated execution of a job."""
    if start < job.submit:
        raise ValueError(f"job {job.id}: start {start} precedes submit {job.submit}")
    if end <= start:
        raise ValueError(f"job {job.id}: end {end} not after start {start}")
    runtime = end - start
    turnaround = end - job.submit
    return JobStats(
        job_id=job.id,
        wait=start - job.submit,
        turnaround=turnaround,
        runtime=runtime,
        node_seconds=float(job.nodes_requested * runtime),
        energy=energy,
        avg_power=energy / runtime,
        edp=energy * turnaround,
        ed2p=energy * turnaround**2,
        size_class=size_class(job.nodes_requested, config),
    )


def area_weighted_response(stats: Sequence[JobStats]) -> float | None:
    """Node-hour-weighted mean turnaround; big long jobs dominate the average."""
    total_area = sum(s.node_seconds for s in stats)
    if total_area == 0:
        return None
    return sum(s.node_seconds * s.turnaround for s in stats) / total_area


def priority_weighted_specific_response(
    stats: Sequence[JobStats], priorities: Mapping[int, int]
) -> float | None:
    """Priority-weighted mean of turnaround per node-hour.

    Priorities shift to a minimum weight of 1 so zero and negative inputs
    still contribute.
    """
    if not stats:
        return None
    lowest = min(priorities.get(s.job_id, 0) for s in stats)
    weights = [priorities.get(s.job_id, 0) - lowest + 1 for s in stats]
    specific = [s.turnaround / (s.node_seconds / 3600.0) for s in stats]
    return sum(w * x for w, x in zip(weights, specific)) / sum(weights)


def _prior_runtime(account: Account) -> float:
    # the file schema stores avg power rather than total runtime; invert it
    if account.avg_power > 0:
        return account.total_energy / account.avg_power
    return 0.0


def accumulate_account(
    accounts: dict[str, Account],
    stats: JobStats,
    account_id: str,
    reference_power: float,
) -> dict[str, Account]:
    """Fold one completed job into its account, creating it on first sight."""
    account = accounts.get(account_id, Account(account_id))
    total_runtime = _prior_runtime(account) + stats.runtime
    total_energy = account.total_energy + stats.energy
    accounts[account_id] = replace(
        account,
        jobs_completed=account.jobs_completed + 1,
        total_energy=total_energy,
        node_seconds=account.node_seconds + stats.node_seconds,
        avg_power=total_energy / total_runtime if total_runtime > 0 else 0.0,
        accumulated_edp=account.accumulated_edp + stats.edp,
        fugaku_points=incentives.earn_fugaku_points(account, stats, reference_power),
    )
    return accounts


def save_accounts(accounts: Mapping[str, Account], path: str) -> None:
    payload = {
        "accounts": {
            acct.account_id: {
                "jobs_completed": acct.jobs_completed,
                "total_energy_j": acct.total_energy,
                "node_seconds": acct.node_seconds,
                "avg_power_w": acct.avg_power,
                "accumulated_edp": acct.accumulated_edp,
                "fugaku_points": acct.fugaku_points,
            }
            for acct in accounts.values()
        }
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_accounts(path: str) -> dict[str, Account]:
    """Read an accounts file back; the schema is strict in both directions."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if set(payload) != {"accounts"}:
        unexpected = set(payload) - {"accounts"} or {"accounts"}
        raise SchemaError(sorted(unexpected)[0], "unexpected or missing top-level key")
    accounts: dict[str, Account] = {}
    for account_id, fields in payload["accounts"].items():
        for key in ACCOUNT_FILE_KEYS:
            if key not in fields:
                raise SchemaError(key, f"account '{account_id}' missing key")
        for key in fields:
            if key not in ACCOUNT_FILE_KEYS:
                raise SchemaError(key, f"account '{account_id}' has unknown key")
        accounts[account_id] = Account(
            account_id=account_id,
            jobs_completed=int(fields["jobs_completed"]),
            total_energy=float(fields["total_energy_j"]),
            node_seconds=float(fields["node_seconds"]),
            avg_power=float(fields["avg_power_w"]),
            accumulated_edp=float(fields["accumulated_edp"]),
            fugaku_points=float(fields["fugaku_points"]),
        )
    return accounts


@dataclass(frozen=True, slots=True)
class StatsReport:
    """System-wide summary of one simulation."""

    completed_jobs: int
    dismissed_jobs: int
    unfinished_jobs: int
    throughput_jobs_per_hour: float
    avg_system_power_w: float | None
    total_energy_j: float
    total_compute_energy_j: float
    total_loss_j: float
    power_efficiency: float | None
    carbon_kg: float
    avg_job_size_nodes: float | None
    size_histogram: dict[str, int]
    aggregate_node_hours: float
    avg_wait_s: float | None
    avg_turnaround_s: float | None
    awrt_s: float | None
    pwsrt_s_per_node_hour: float | None
    per_account: dict[str, Account]


def build_report(
    *,
    window: SimWindow,
    completed: Sequence[JobStats],
    job_sizes: Mapping[int, int],
    job_priorities: Mapping[int, int],
    facility_energy_j: float,
    compute_energy_j: float,
    loss_energy_j: float,
    tick_count: int,
    timestep: int,
    carbon_intensity: float,
    dismissed: int,
    unfinished: int,
    accounts: Mapping[str, Account],
) -> StatsReport:
    n = len(completed)
    window_hours = window.length / 3600.0
    histogram = {name: 0 for name in SIZE_CLASSES}
    for s in completed:
        histogram[s.size_class] += 1
    return StatsReport(
        completed_jobs=n,
        dismissed_jobs=dismissed,
        unfinished_jobs=unfinished,
        throughput_jobs_per_hour=n / window_hours if window_hours > 0 else 0.0,
        avg_system_power_w=(
            facility_energy_j / (tick_count * timestep) if tick_count else None
        ),
        total_energy_j=facility_energy_j,
        total_compute_energy_j=compute_energy_j,
        total_loss_j=loss_energy_j,
        power_efficiency=(
            compute_energy_j / facility_energy_j if facility_energy_j > 0 else None
        ),
        carbon_kg=facility_energy_j / 3.6e6 * carbon_intensity,
        avg_job_size_nodes=(
            sum(job_sizes[s.job_id] for s in completed) / n if n else None
        ),
        size_histogram=histogram,
        aggregate_node_hours=sum(s.node_seconds for s in completed) / 3600.0,
        avg_wait_s=sum(s.wait for s in completed) / n if n else None,
        avg_turnaround_s=sum(s.turnaround for s in completed) / n if n else None,
        awrt_s=area_weighted_response(completed) if n else None,
        pwsrt_s_per_node_hour=(
            priority_weighted_specific_response(completed, job_priorities) if n else None
        ),
        per_account=dict(accounts),
    )
