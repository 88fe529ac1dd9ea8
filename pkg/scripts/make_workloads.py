#!/usr/bin/env python3
"""Regenerate the bundled synthetic workloads under workloads/.

All three files are deterministic, so rerunning this script is a no-op
unless the generation rules change.
"""

from __future__ import annotations

import csv
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
WORKLOADS = os.path.join(ROOT, "workloads")

HEADER = [
    "job_id", "account", "submit", "start", "end", "wall_limit",
    "nodes_requested", "nodes_assigned", "priority", "avg_util", "trace_file",
]


def write(name: str, rows: list[list]) -> None:
    path = os.path.join(WORKLOADS, name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        writer.writerows(rows)
    print(f"wrote {path} ({len(rows)} jobs)")


def toy() -> None:
    """Six mixed jobs on 8 nodes; recorded times match their own fcfs/none run."""
    rows = [
        [1, "acctA", 0, 0, 120, 120, 4, "", 0, "", "toy_traces/job_1.csv"],
        [2, "acctB", 0, 0, 180, 180, 4, "", 1, 0.5, ""],
        [3, "acctA", 0, 120, 180, 60, 2, "", 0, 0.25, ""],
        [4, "acctB", 60, 180, 300, 120, 8, "", 2, 1.0, ""],
        [5, "acctA", 60, 300, 600, 300, 1, "", 0, 0.8, ""],
        [6, "acctB", 900, 900, 1020, 120, 2, "", 1, 0.6, ""],
    ]
    write("toy.csv", rows)
    trace_dir = os.path.join(WORKLOADS, "toy_traces")
    os.makedirs(trace_dir, exist_ok=True)
    with open(os.path.join(trace_dir, "job_1.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "util"])
        for i, t in enumerate(range(0, 120, 15)):
            writer.writerow([t, round(0.1 + 0.1 * i, 2)])


def congested() -> None:
    """Keeps a 16-node system saturated: wide blockers between swarms of
    single-node jobs, so backfill has plenty to harvest."""
    rows = []
    rows.append([0, "wide", 0, "", "", 300, 16, "", 0, 1.0, ""])
    for i in range(1, 51):
        rows.append([i, f"acct{i % 4}", 0, "", "", 600, 1, "", 0, 1.0, ""])
    rows.append([51, "wide", 0, "", "", 300, 16, "", 0, 1.0, ""])
    for i in range(52, 82):
        rows.append([i, f"acct{i % 4}", 0, "", "", 600, 1, "", 0, 1.0, ""])
    write("congested.csv", rows)


def replay50() -> None:
    """50 jobs with explicit, non-overlapping node assignments on 16 nodes."""
    rows = []
    for i in range(50):
        group = i % 8
        start = (i // 8) * 120
        end = start + 100
        submit = max(0, start - 10)
        nodes = f"{2 * group};{2 * group + 1}"
        util = round(0.2 + 0.15 * (i % 5), 2)
        rows.append([i + 1, f"acct{i % 3}", submit, start, end, 120, 2, nodes, i % 4, util, ""])
    write("replay50.csv", rows)


def main() -> int:
    os.makedirs(WORKLOADS, exist_ok=True)
    toy()
    congested()
    replay50()
    return 0


if __name__ == "__main__":
    sys.exit(main())
