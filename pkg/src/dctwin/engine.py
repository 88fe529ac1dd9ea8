"""Forward-time simulation loop tying scheduling to the physical models.

Each step runs four phases in order: clear completed jobs, admit newly
submitted jobs to the queue, invoke the scheduler (built-in policy,
telemetry replay, or external bridge), then tick the power and cooling
models and advance the clock. Jobs become visible to the scheduler only
once submitted, so no schedule can be precomputed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import schedulers
from .bridge import ExternalSchedulerBridge, ProtocolError
from .dataloader import ClippedWorkload, WorkloadSet, clip_to_window, sample_trace
from .model import Account, BoundaryFlag, Job, SimWindow, SystemConfig, validate_config
from .ml_policy import ClusterModel, score_job
from .power_cooling import CoolingState, PowerSnapshot, apply_loss, cooling_step, system_power
from .resource_manager import NodePool, ResourceError
from .schedulers import RunningInfo
from .stats_accounting import JobStats, StatsReport, accumulate_account, build_report, job_stats

logger = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


@dataclass
class RunningJob:
    job: Job
    sim_start: int
    sim_end: int
    nodes: tuple[int, ...]
    recorded_placement: bool
    energy_j: float = 0.0


@dataclass(frozen=True, slots=True)
class JobRecord:
    """Final outcome of one job: how it ran and what it cost."""

    job: Job
    start: int
    end: int
    nodes: tuple[int, ...]
    energy_j: float
    finished: bool
    stats: JobStats


@dataclass(frozen=True, slots=True)
class TickRow:
    snapshot: PowerSnapshot
    queued: int
    running: int


@dataclass
class SimulationOutput:
    config: SystemConfig
    window: SimWindow
    policy: str
    backfill: str
    ticks: list[TickRow]
    records: list[JobRecord]
    report: StatsReport
    accounts: dict[str, Account]
    first_reservations: dict[int, int]
    dismissed_count: int
    accounts_collected: bool = False
    valid: bool = True
    error: str | None = None
    error_kind: str | None = None

    def start_times(self) -> dict[int, int]:
        return {r.job.id: r.start for r in self.records}

    def node_sets(self) -> dict[int, tuple[int, ...]]:
        return {r.job.id: tuple(sorted(r.nodes)) for r in self.records}


class Engine:
    """Owns all mutable simulation state; strictly single-threaded."""

    def __init__(
        self,
        config: SystemConfig,
        clipped: ClippedWorkload,
        window: SimWindow,
        policy: str,
        backfill: str = "none",
        *,
        accounts: dict[str, Account] | None = None,
        collect_accounts: bool = False,
        ml_model: ClusterModel | None = None,
        bridge: ExternalSchedulerBridge | None = None,
    ):
        validate_config(config)
        if policy not in schedulers.POLICIES:
            raise ValueError(f"unknown policy '{policy}'")
        self.config = config
        self.window = window
        self.policy = policy
        self.backfill = schedulers.normalize_backfill(backfill)
        self.bridge = bridge
        self.ml_model = ml_model
        if policy == "ml" and ml_model is None:
            raise SimulationError("policy ml requires a trained model")

        self.now = window.start
        self.pool = NodePool(config.total_nodes)
        self.queue: list[Job] = []
        self.running: dict[int, RunningJob] = {}
        self.pending: list[Job] = sorted(clipped.eligible, key=lambda j: (j.submit, j.id))
        self._pending_idx = 0
        self.dismissed_count = clipped.dismissed_count

        # snapshot used for priority derivation; frozen for the whole run
        self._account_snapshot: dict[str, Account] = dict(accounts or {})
        self.collect_accounts = collect_accounts
        self.accounts: dict[str, Account] = dict(accounts or {}) if collect_accounts else {}

        self.records: list[JobRecord] = []
        self._completed_stats: list[JobStats] = []
        self._job_sizes: dict[int, int] = {}
        self._job_priorities: dict[int, int] = {}
        self.ticks: list[TickRow] = []
        self.first_reservations: dict[int, int] = {}
        self.cooling = CoolingState(config.cooling.supply_temp)
        self._facility_energy = 0.0
        self._compute_energy = 0.0
        self._loss_energy = 0.0
        self._dirty = True
        self._announced: set[int] = set()
        self._new_descriptors: list[dict] = []

        if bridge is not None:
            if clipped.prepopulate:
                raise SimulationError("bridge mode cannot represent prepopulated jobs")
            bridge.handshake(config.total_nodes, config.timestep)
        self._prepopulate(clipped.prepopulate)

    # -- initialization -------------------------------------------------

    def _prepopulate(self, jobs: tuple[Job, ...]) -> None:
        for job in sorted(jobs, key=lambda j: (j.start, j.id)):
            assert job.start is not None and job.end is not None
            if job.nodes_assigned is not None:
                nodes = self.pool.allocate(job.id, explicit=job.nodes_assigned)
            else:
                nodes = self.pool.allocate(job.id, count=job.nodes_requested)
            self.running[job.id] = RunningJob(
                job=job,
                sim_start=job.start,
                sim_end=job.end,
                nodes=tuple(nodes),
                recorded_placement=True,
            )

    # -- per-step phases ------------------------------------------------

    def step(self) -> None:
        """Advance the simulation by one timestep."""
        if self.now >= self.window.end:
            raise SimulationError("stepping past the simulation window")
        now = self.now
        completed_ids = self._clear_completed(now)
        self._admit_submitted(now)
        self._schedule(now, completed_ids)
        self._tick(now)
        self.now = now + self.config.timestep

    def _clear_completed(self, now: int) -> list[int]:
        done = sorted(
            (rj for rj in self.running.values() if rj.sim_end <= now),
            key=lambda rj: (rj.sim_end, rj.job.id),
        )
        for rj in done:
            self.pool.release(rj.job.id)
            del self.running[rj.job.id]
            self._record(rj, rj.sim_end, finished=True)
            self._dirty = True
        return [rj.job.id for rj in done]

    def _admit_submitted(self, now: int) -> None:
        while self._pending_idx < len(self.pending) and self.pending[self._pending_idx].submit <= now:
            job = self.pending[self._pending_idx]
            self._pending_idx += 1
            if self.policy == "ml" and job.score is None:
                job = job.with_score(score_job(self.ml_model, job))
            self.queue.append(job)
            if self.bridge is not None:
                self._new_descriptors.append(
                    {
                        "id": job.id,
                        "nodes": job.nodes_requested,
                        "wall_limit": job.wall_limit,
                        "priority": job.priority,
                    }
                )
                self._announced.add(job.id)
            self._dirty = True

    def _schedule(self, now: int, completed_ids: list[int]) -> None:
        if self.bridge is not None:
            self._bridge_schedule(now, completed_ids)
        elif self.policy == "replay":
            self._replay_schedule(now)
        else:
            # skip recomputation when nothing changed since the last call
            if self._dirty and self.queue:
                self._builtin_schedule(now)
            self._dirty = False

    def _builtin_schedule(self, now: int) -> None:
        ordered = schedulers.order_queue(self.policy, self.queue, now, self._account_snapshot)
        running_infos = [
            RunningInfo(rj.job, rj.sim_start, rj.nodes)
            for rj in sorted(self.running.values(), key=lambda r: r.job.id)
        ]
        placements, reservation = schedulers.schedule_step(
            ordered, self.pool, self.backfill, now, running_infos
        )
        if reservation is not None:
            self.first_reservations.setdefault(reservation.job_id, reservation.reserved_start)
        placed: set[int] = set()
        for job, nodes in placements:
            self.pool.allocate(job.id, explicit=nodes)
            self._start(job, now, tuple(nodes), recorded=False)
            placed.add(job.id)
        if placed:
            self.queue = [j for j in self.queue if j.id not in placed]

    def _replay_schedule(self, now: int) -> None:
        ordered = schedulers.order_queue("replay", self.queue, now)
        placed: set[int] = set()
        for job in ordered:
            if job.start > now:
                break
            nodes = schedulers.replay_place(job, self.pool, now)
            if nodes is None:
                break
            self._start(job, job.start, nodes, recorded=True)
            placed.add(job.id)
        if placed:
            self.queue = [j for j in self.queue if j.id not in placed]

    def _bridge_schedule(self, now: int, completed_ids: list[int]) -> None:
        entries = self.bridge.tick(now, self._new_descriptors, completed_ids)
        self._new_descriptors = []
        by_id = {job.id: job for job in self.queue}
        response_ids: set[int] = set()
        placed: set[int] = set()
        for entry in entries:
            job_id = int(entry["id"])
            response_ids.add(job_id)
            if job_id not in self._announced:
                raise ProtocolError(f"unknown job {job_id}")
            if job_id in self.running:
                continue
            job = by_id.get(job_id)
            if job is None:
                raise ProtocolError(f"job {job_id} is not schedulable (already finished?)")
            try:
                if "nodes" in entry:
                    explicit = [int(n) for n in entry["nodes"]]
                    if len(explicit) != job.nodes_requested:
                        raise ProtocolError(
                            f"job {job_id}: got {len(explicit)} nodes,"
                            f" requested {job.nodes_requested}"
                        )
                    nodes = self.pool.allocate(job.id, explicit=explicit)
                else:
                    if int(entry["count"]) != job.nodes_requested:
                        raise ProtocolError(
                            f"job {job_id}: count {entry['count']} != requested {job.nodes_requested}"
                        )
                    nodes = self.pool.allocate(job.id, count=job.nodes_requested)
            except ResourceError as exc:
                raise ProtocolError(f"cannot apply external placement: {exc}") from exc
            self._start(job, now, tuple(nodes), recorded=False)
            placed.add(job.id)
        if placed:
            self.queue = [j for j in self.queue if j.id not in placed]
        # jobs the engine believes running but the scheduler dropped: external completion
        for rj in sorted(self.running.values(), key=lambda r: r.job.id):
            if rj.job.id in self._announced and rj.job.id not in response_ids:
                self.pool.release(rj.job.id)
                del self.running[rj.job.id]
                self._record(rj, now, finished=True)
                self._dirty = True

    def _start(self, job: Job, start: int, nodes: tuple[int, ...], recorded: bool) -> None:
        self.running[job.id] = RunningJob(
            job=job,
            sim_start=start,
            sim_end=start + self._sim_duration(job, recorded),
            nodes=nodes,
            recorded_placement=recorded,
        )

    def _sim_duration(self, job: Job, recorded: bool) -> int:
        """Replay keeps the recorded runtime; rescheduling caps it at the wall limit."""
        duration = job.times.duration
        if duration is None:
            return job.wall_limit
        if not recorded and duration > job.wall_limit:
            logger.warning(
                "job %d recorded runtime %ds exceeds wall limit %ds; truncating",
                job.id,
                duration,
                job.wall_limit,
            )
            return job.wall_limit
        return duration

    def _tick(self, now: int) -> None:
        dt = self.config.timestep
        ordered = sorted(self.running.values(), key=lambda r: r.job.id)
        loads = [(len(rj.nodes), self._utilization_of(rj, now)) for rj in ordered]
        compute, per_job, util = system_power(loads, self.pool.free_count, self.config)
        for rj, watts in zip(ordered, per_job):
            rj.energy_j += watts * dt
        facility, loss = apply_loss(compute, self.config.conversion_efficiency)
        self.cooling, pue, return_temp = cooling_step(
            self.cooling, facility, dt, self.config.cooling
        )
        self._facility_energy += facility * dt
        self._compute_energy += compute * dt
        self._loss_energy += loss * dt
        self.ticks.append(
            TickRow(
                snapshot=PowerSnapshot(
                    t=now,
                    compute_watts=compute,
                    loss_watts=loss,
                    facility_watts=facility,
                    utilization=util,
                    pue=pue,
                    return_temp=return_temp,
                ),
                queued=len(self.queue),
                running=len(self.running),
            )
        )

    def _utilization_of(self, rj: RunningJob, now: int) -> float:
        job = rj.job
        if job.trace is None:
            return job.scalar_avg_util if job.scalar_avg_util is not None else 0.0
        if rj.recorded_placement:
            t = now
        else:
            base = job.times.telemetry_start
            if base is None:
                base = job.trace.sample_times[0]
            t = base + (now - rj.sim_start)
        return sample_trace(job.trace, t)

    def _record(self, rj: RunningJob, end: int, finished: bool) -> None:
        stats = job_stats(rj.job, rj.sim_start, end, rj.energy_j, self.config)
        job = rj.job
        if not finished and job.boundary_flag == BoundaryFlag.NONE:
            job = job.with_flag(BoundaryFlag.ENDS_AFTER_WINDOW)
        self.records.append(
            JobRecord(
                job=job,
                start=rj.sim_start,
                end=end,
                nodes=rj.nodes,
                energy_j=rj.energy_j,
                finished=finished,
                stats=stats,
            )
        )
        self._job_sizes[job.id] = job.nodes_requested
        self._job_priorities[job.id] = job.priority
        if finished:
            self._completed_stats.append(stats)
            if self.collect_accounts:
                accumulate_account(
                    self.accounts, stats, job.account_id, self.config.reference_power_w
                )

    # -- whole-run driver -------------------------------------------------

    def run(self) -> SimulationOutput:
        """Iterate steps through the window; errors yield a flagged partial output."""
        error = None
        error_kind = None
        try:
            while self.now < self.window.end:
                self.step()
            for rj in sorted(self.running.values(), key=lambda r: (r.sim_end, r.job.id)):
                self.pool.release(rj.job.id)
                self._record(rj, self.window.end, finished=False)
            self.running.clear()
        except ProtocolError as exc:
            error, error_kind = str(exc), "protocol"
        except (ResourceError, RuntimeError, ValueError) as exc:
            error, error_kind = str(exc), "runtime"
        report = build_report(
            window=self.window,
            completed=self._completed_stats,
            job_sizes=self._job_sizes,
            job_priorities=self._job_priorities,
            facility_energy_j=self._facility_energy,
            compute_energy_j=self._compute_energy,
            loss_energy_j=self._loss_energy,
            tick_count=len(self.ticks),
            timestep=self.config.timestep,
            carbon_intensity=self.config.carbon_intensity,
            dismissed=self.dismissed_count,
            unfinished=sum(1 for r in self.records if not r.finished),
            accounts=self.accounts,
        )
        return SimulationOutput(
            config=self.config,
            window=self.window,
            policy=self.policy,
            backfill=self.backfill,
            ticks=self.ticks,
            records=self.records,
            report=report,
            accounts=self.accounts,
            first_reservations=self.first_reservations,
            dismissed_count=self.dismissed_count,
            accounts_collected=self.collect_accounts,
            valid=error is None,
            error=error,
            error_kind=error_kind,
        )


def initialize(
    config: SystemConfig,
    clipped: ClippedWorkload,
    window: SimWindow,
    policy: str = "replay",
    backfill: str = "none",
    **kwargs,
) -> Engine:
    return Engine(config, clipped, window, policy, backfill, **kwargs)


def run(
    config: SystemConfig,
    workload: WorkloadSet,
    window: SimWindow,
    policy: str,
    backfill: str = "none",
    **kwargs,
) -> SimulationOutput:
    """Clip a workload to the window and simulate it end to end."""
    clipped = clip_to_window(workload, window)
    return Engine(config, clipped, window, policy, backfill, **kwargs).run()
