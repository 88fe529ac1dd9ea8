"""Workload ingestion: canonical CSV, SWF traces, window clipping, trace sampling."""

from __future__ import annotations

import csv
import os
from bisect import bisect_right
from dataclasses import dataclass, field

from .model import BoundaryFlag, Job, JobTimes, SimWindow, UtilizationTrace

CANONICAL_COLUMNS = [
    "job_id",
    "account",
    "submit",
    "start",
    "end",
    "wall_limit",
    "nodes_requested",
    "nodes_assigned",
    "priority",
    "avg_util",
    "trace_file",
]

SWF_FIELD_COUNT = 18


class DataFormatError(ValueError):
    """A workload file violates its schema; message carries the location."""


@dataclass(frozen=True, slots=True)
class WorkloadSet:
    """All jobs of a dataset, sorted by (submit, id)."""

    jobs: tuple[Job, ...]
    dataset_span: SimWindow
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class ClippedWorkload:
    """Partition of a workload against a simulation window.

    prepopulate: running when the window opens, placed before the first step.
    eligible: everything that can still be submitted inside the window.
    flagged: jobs whose recorded execution crosses a window edge.
    """

    prepopulate: tuple[Job, ...]
    eligible: tuple[Job, ...]
    dismissed_count: int
    flagged: tuple[Job, ...]


def _opt_int(text: str) -> int | None:
    return int(text) if text else None


def _load_trace(path: str) -> UtilizationTrace:
    times: list[int] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["time", "util"]:
            raise DataFormatError(f"{path}: trace header must be 'time,util'")
        for row in reader:
            times.append(int(row["time"]))
            values.append(float(row["util"]))
    try:
        return UtilizationTrace(tuple(times), tuple(values))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _span(jobs: list[Job]) -> SimWindow:
    if not jobs:
        return SimWindow(0, 0)
    lo = min(j.submit for j in jobs)
    hi = max(j.end if j.end is not None else j.submit + j.wall_limit for j in jobs)
    return SimWindow(lo, max(lo, hi))


def _finish(jobs: list[Job], metadata: dict[str, str] | None = None) -> WorkloadSet:
    jobs.sort(key=lambda j: (j.submit, j.id))
    seen: set[int] = set()
    for job in jobs:
        if job.id in seen:
            raise DataFormatError(f"duplicate job id {job.id}")
        seen.add(job.id)
    return WorkloadSet(tuple(jobs), _span(jobs), metadata or {})


def load_canonical(path: str) -> WorkloadSet:
    """Parse the canonical workload CSV; traces resolve relative to the file."""
    base = os.path.dirname(os.path.abspath(path))
    jobs: list[Job] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CANONICAL_COLUMNS:
            raise DataFormatError(
                f"{path}: header must be exactly {','.join(CANONICAL_COLUMNS)}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                jobs.append(_parse_canonical_row(row, base))
            except (ValueError, KeyError) as exc:
                raise DataFormatError(f"{path}: row {lineno}: {exc}") from exc
    return _finish(jobs)


def _parse_canonical_row(row: dict[str, str], base: str) -> Job:
    assigned = None
    if row["nodes_assigned"]:
        assigned = tuple(int(part) for part in row["nodes_assigned"].split(";"))
    trace = None
    telemetry_start = telemetry_end = None
    if row["trace_file"]:
        trace = _load_trace(os.path.join(base, row["trace_file"]))
        telemetry_start = trace.sample_times[0]
        telemetry_end = trace.sample_times[-1]
    times = JobTimes(
        submit=int(row["submit"]),
        start=_opt_int(row["start"]),
        end=_opt_int(row["end"]),
        wall_limit=int(row["wall_limit"]),
        telemetry_start=telemetry_start,
        telemetry_end=telemetry_end,
    )
    return Job(
        id=int(row["job_id"]),
        account_id=row["account"],
        times=times,
        nodes_requested=int(row["nodes_requested"]),
        nodes_assigned=assigned,
        priority=int(row["priority"]) if row["priority"] else 0,
        trace=trace,
        scalar_avg_util=float(row["avg_util"]) if row["avg_util"] else None,
    )


def save_canonical(workload: WorkloadSet, path: str) -> None:
    """Write a workload back out; per-job traces land next to the CSV.

    load_canonical(save_canonical(ws)) reproduces ws exactly.
    """
    base = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]
    trace_dir = f"{stem}_traces"
    os.makedirs(base, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_COLUMNS)
        for job in workload.jobs:
            trace_ref = ""
            if job.trace is not None:
                trace_ref = os.path.join(trace_dir, f"job_{job.id}.csv")
                full = os.path.join(base, trace_ref)
                os.makedirs(os.path.dirname(full), exist_ok=True)
                with open(full, "w", newline="", encoding="utf-8") as tfh:
                    twriter = csv.writer(tfh, lineterminator="\n")
                    twriter.writerow(["time", "util"])
                    for t, v in zip(job.trace.sample_times, job.trace.values):
                        twriter.writerow([t, repr(v)])
            writer.writerow(
                [
                    job.id,
                    job.account_id,
                    job.submit,
                    "" if job.start is None else job.start,
                    "" if job.end is None else job.end,
                    job.wall_limit,
                    job.nodes_requested,
                    ";".join(str(n) for n in job.nodes_assigned) if job.nodes_assigned else "",
                    job.priority,
                    "" if job.scalar_avg_util is None else repr(job.scalar_avg_util),
                    trace_ref,
                ]
            )


def load_swf(path: str) -> WorkloadSet:
    """Parse a Standard Workload Format trace.

    Field mapping (1-based): 1 id, 2 submit, 3 wait, 4 runtime,
    8 requested processors (falling back to field 5), 9 requested time
    (falling back to runtime), 12 user -> account. Processor counts are
    taken as node counts. Negative wait leaves start/end unset.
    """
    jobs: list[Job] = []
    metadata: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(";"):
                comment = line.lstrip(";").strip()
                if ":" in comment:
                    key, _, value = comment.partition(":")
                    metadata[key.strip()] = value.strip()
                continue
            fields = line.split()
            if len(fields) < SWF_FIELD_COUNT:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {SWF_FIELD_COUNT} fields, got {len(fields)}"
                )
            try:
                jobs.append(_parse_swf_fields(fields))
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from exc
    return _finish(jobs, metadata)


def _parse_swf_fields(fields: list[str]) -> Job:
    job_id = int(fields[0])
    submit = int(fields[1])
    wait = int(fields[2])
    runtime = int(fields[3])
    if runtime < 0:
        raise ValueError(f"negative runtime {runtime}")
    nodes = int(fields[7])
    if nodes <= 0:
        nodes = int(fields[4])
    if nodes <= 0:
        raise ValueError("no usable processor count in fields 8 or 5")
    wall = int(fields[8])
    if wall <= 0:
        wall = max(runtime, 1)
    start = end = None
    if wait >= 0:
        start = submit + wait
        if runtime > 0:
            end = start + runtime
    times = JobTimes(submit=submit, start=start, end=end, wall_limit=wall)
    return Job(id=job_id, account_id=fields[11], times=times, nodes_requested=nodes)


def clip_to_window(workload: WorkloadSet, window: SimWindow) -> ClippedWorkload:
    """Partition jobs against the window.

    Jobs fully before or submitted after the window are dismissed. Jobs
    recorded as running when the window opens prepopulate the system;
    everything else is eligible for scheduling. Jobs recorded to run
    past the window end are flagged: no ground truth exists for them
    beyond the capture.
    """
    prepopulate: list[Job] = []
    eligible: list[Job] = []
    flagged: list[Job] = []
    dismissed = 0
    for job in workload.jobs:
        end = job.end
        if (end is not None and end <= window.start) or job.submit >= window.end:
            dismissed += 1
            continue
        runs_past = end is not None and end > window.end
        if job.start is not None and end is not None and job.start < window.start < end:
            job = job.with_flag(BoundaryFlag.STARTED_BEFORE_WINDOW)
            prepopulate.append(job)
            flagged.append(job)
        else:
            if runs_past:
                job = job.with_flag(BoundaryFlag.ENDS_AFTER_WINDOW)
                flagged.append(job)
            eligible.append(job)
    return ClippedWorkload(tuple(prepopulate), tuple(eligible), dismissed, tuple(flagged))


def sample_trace(trace: UtilizationTrace, t: int) -> float:
    """Value at the greatest sample time <= t; the first value before that.

    Gaps and out-of-range queries carry the last known value forward (and
    the first value backward at the left edge).
    """
    idx = bisect_right(trace.sample_times, t) - 1
    if idx < 0:
        idx = 0
    return trace.values[idx]
