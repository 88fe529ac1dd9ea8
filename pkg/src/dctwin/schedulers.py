"""Built-in queue ordering policies and backfill strategies.

All ordering and placement here is pure computation over engine-owned
state. The universal tie-break is (priority desc, submit asc, id asc),
reduced to (submit asc, id asc) wherever priority plays no role, which
keeps every schedule deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import incentives
from .model import Account, Job
from .resource_manager import NodePool

POLICIES = (
    "replay",
    "fcfs",
    "sjf",
    "ljf",
    "priority",
    "acct_avg_power",
    "acct_low_avg_power",
    "acct_edp",
    "acct_fugaku_pts",
    "ml",
)

BACKFILLS = ("none", "first-fit", "easy")

_BACKFILL_ALIASES = {"firstfit": "first-fit", "nobf": "none"}


def normalize_backfill(name: str) -> str:
    name = _BACKFILL_ALIASES.get(name, name)
    if name not in BACKFILLS:
        raise ValueError(f"unknown backfill '{name}' (choose from {', '.join(BACKFILLS)})")
    return name


class MissingScore(RuntimeError):
    def __init__(self, job_id: int):
        super().__init__(f"job {job_id} has no rank score; ml policy needs a model")
        self.job_id = job_id


class Unsatisfiable(RuntimeError):
    def __init__(self, job_id: int, requested: int, total: int):
        super().__init__(f"job {job_id} requests {requested} nodes on a {total}-node system")
        self.job_id = job_id


@dataclass(frozen=True, slots=True)
class Reservation:
    """Count-based node reservation for the queue head that cannot start yet."""

    job_id: int
    reserved_start: int
    reserved_nodes: int


@dataclass(frozen=True, slots=True)
class RunningInfo:
    """Scheduler-visible view of a running job."""

    job: Job
    start: int
    nodes: tuple[int, ...]

    @property
    def projected_end(self) -> int:
        # Schedulers may only use the user's wall-limit estimate, never the
        # recorded runtime: the twin must not look into the future.
        return self.start + self.job.wall_limit


def order_queue(
    policy: str,
    queue: Sequence[Job],
    now: int,
    accounts: Mapping[str, Account] | None = None,
) -> list[Job]:
    """Reorder the queue per policy; output is always a permutation of input."""
    jobs = list(queue)
    if policy == "fcfs":
        jobs.sort(key=lambda j: (j.submit, j.id))
    elif policy == "sjf":
        jobs.sort(key=lambda j: (j.wall_limit, j.submit, j.id))
    elif policy == "ljf":
        jobs.sort(key=lambda j: (-j.wall_limit, j.submit, j.id))
    elif policy == "priority":
        jobs.sort(key=lambda j: (-j.priority, j.submit, j.id))
    elif policy == "replay":
        missing = [j.id for j in jobs if j.start is None]
        if missing:
            raise ValueError(f"replay needs recorded start times; missing for jobs {missing}")
        jobs.sort(key=lambda j: (j.start, j.submit, j.id))
    elif policy == "ml":
        for job in jobs:
            if job.score is None:
                raise MissingScore(job.id)
        jobs.sort(key=lambda j: (-j.score, j.submit, j.id))
    elif policy in incentives.ACCOUNT_POLICIES:
        ranking = incentives.derive_priorities(policy, accounts or {})
        jobs.sort(key=lambda j: (-ranking.priority_of(j.account_id), j.submit, j.id))
    else:
        raise ValueError(f"unknown policy '{policy}'")
    return jobs


def easy_reservation(
    blocker: Job,
    running: Sequence[RunningInfo],
    pool: NodePool,
    now: int,
) -> Reservation:
    """Earliest time enough nodes come free for the blocker.

    Running jobs are assumed to hold their nodes until start + wall_limit;
    freed counts accumulate in projected-end order until the blocker fits.
    """
    return _reservation(
        blocker,
        [(r.projected_end, len(r.nodes)) for r in running],
        pool.free_count,
        pool.total,
        now,
    )


def _reservation(
    blocker: Job,
    projected: list[tuple[int, int]],
    free_now: int,
    total: int,
    now: int,
) -> Reservation:
    need = blocker.nodes_requested
    if need > total:
        raise Unsatisfiable(blocker.id, need, total)
    available = free_now
    if available >= need:
        return Reservation(blocker.id, now, need)
    for end, nodes in sorted(projected):
        available += nodes
        if available >= need:
            return Reservation(blocker.id, max(end, now), need)
    raise Unsatisfiable(blocker.id, need, total)


def schedule_step(
    ordered: Sequence[Job],
    pool: NodePool,
    mode: str,
    now: int,
    running: Sequence[RunningInfo] = (),
) -> tuple[list[tuple[Job, tuple[int, ...]]], Reservation | None]:
    """Plan placements for one step; the caller applies them to the pool.

    The ordered queue is walked front to back, starting every job that fits
    until the first one that does not (the head blocker). Mode none stops
    there. Mode first-fit keeps walking and starts anything that fits into
    the nodes left over, ignoring the blocker entirely. Mode easy gives the
    blocker a reservation and only starts later jobs that either finish by
    the reserved time or still leave the reserved node count free then.
    """
    free = pool.free_nodes()
    placements: list[tuple[Job, tuple[int, ...]]] = []
    # (projected_end, node_count) of everything committed: running + placed now
    committed = [(r.projected_end, len(r.nodes)) for r in running]

    def place(job: Job) -> None:
        nonlocal free
        chosen = tuple(free[: job.nodes_requested])
        free = free[job.nodes_requested :]
        placements.append((job, chosen))
        committed.append((now + job.wall_limit, job.nodes_requested))

    blocker = None
    rest: list[Job] = []
    for i, job in enumerate(ordered):
        if job.nodes_requested <= len(free):
            place(job)
        else:
            blocker = job
            rest = list(ordered[i + 1 :])
            break

    if blocker is None or mode == "none":
        return placements, None

    if mode == "first-fit":
        for job in rest:
            if job.nodes_requested <= len(free):
                place(job)
        return placements, None

    if mode != "easy":
        raise ValueError(f"unknown backfill mode '{mode}'")

    reservation = _reservation(blocker, committed, len(free), pool.total, now)
    rs, rn = reservation.reserved_start, reservation.reserved_nodes
    for job in rest:
        if job.nodes_requested > len(free):
            continue
        if now + job.wall_limit <= rs:
            place(job)
            continue
        # would run past the reservation: admit only if the blocker still fits then
        busy_at_rs = sum(n for end, n in committed if end > rs) + job.nodes_requested
        if pool.total - busy_at_rs >= rn:
            place(job)
    return placements, reservation


def replay_place(job: Job, pool: NodePool, now: int) -> tuple[int, ...] | None:
    """Exact telemetry placement: recorded start on recorded nodes.

    Returns None while the recorded start is still in the future. Jobs
    without a recorded node set take the lowest free nodes instead.
    """
    if job.start is None:
        raise ValueError(f"job {job.id} has no recorded start; cannot replay")
    if job.start > now:
        return None
    if job.nodes_assigned is not None:
        return tuple(pool.allocate(job.id, explicit=job.nodes_assigned))
    return tuple(pool.allocate(job.id, count=job.nodes_requested))
