"""Reference external scheduler speaking the bridge protocol on stdio.

Implements plain first-come-first-served with no backfill over its own
copy of the node state, which makes it the conformance counterparty for
the bridge: driving the engine through this process must reproduce the
built-in fcfs/none schedule exactly.

Run with: python -m dctwin.stub_sched
"""

from __future__ import annotations

import json
import sys
from bisect import insort


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def _fail(message: str) -> None:
    print(f"stub scheduler: {message}", file=sys.stderr)
    sys.exit(1)


def _read_message(stream) -> dict | None:
    line = stream.readline()
    if not line:
        return None
    try:
        payload = json.loads(line)
    except json.JSONDecodeError:
        _fail(f"malformed request line: {line.strip()!r}")
    if not isinstance(payload, dict):
        _fail("request is not a JSON object")
    return payload


def main() -> int:
    init = _read_message(sys.stdin)
    if init is None:
        return 0
    if init.get("type") != "init" or "total_nodes" not in init:
        _fail(f"expected init message, got {init!r}")
    total = int(init["total_nodes"])
    _emit({"type": "ready"})

    free = list(range(total))
    queue: list[dict] = []          # FCFS, in announcement order
    running: dict[int, list[int]] = {}
    known: set[int] = set()
    last_time: int | None = None

    while True:
        request = _read_message(sys.stdin)
        if request is None:
            return 0
        if request.get("type") != "tick":
            _fail(f"expected tick message, got {request!r}")
        time = int(request["time"])
        if last_time is not None and time <= last_time:
            _fail(f"time {time} does not advance past {last_time}")
        last_time = time

        for job_id in request.get("completed", []):
            nodes = running.pop(int(job_id), None)
            if nodes is None:
                _fail(f"completion for job {job_id} that is not running")
            for node in nodes:
                insort(free, node)

        for descriptor in request.get("new_jobs", []):
            job_id = int(descriptor["id"])
            if job_id in known:
                _fail(f"job {job_id} announced twice")
            known.add(job_id)
            queue.append(descriptor)

        # strict FCFS walk: stop at the first job that does not fit
        while queue:
            need = int(queue[0]["nodes"])
            if need > total:
                _fail(f"job {queue[0]['id']} needs {need} of {total} nodes")
            if need > len(free):
                break
            descriptor = queue.pop(0)
            chosen = free[:need]
            del free[:need]
            running[int(descriptor["id"])] = chosen

        _emit(
            {
                "type": "running",
                "jobs": [
                    {"id": job_id, "nodes": nodes}
                    for job_id, nodes in sorted(running.items())
                ],
            }
        )


if __name__ == "__main__":
    sys.exit(main())
