"""Drive an external scheduler process over newline-delimited JSON.

One request line, one response line, strictly alternating over the
child's stdin/stdout. The engine announces new submissions and reports
completions each tick; the scheduler answers with the full set of jobs
it considers running, and the engine reconciles that against its own
state (both sides keep independent copies).

Wire format, one UTF-8 JSON object per line:
  -> {"type": "init", "total_nodes": N, "timestep": S}
  <- {"type": "ready"}
  -> {"type": "tick", "time": T,
      "new_jobs": [{"id": I, "nodes": N, "wall_limit": W, "priority": P}, ...],
      "completed": [I, ...]}
  <- {"type": "running", "jobs": [{"id": I, "nodes": [...]} | {"id": I, "count": N}, ...]}
"""

from __future__ import annotations

import json
import subprocess


class ProtocolError(RuntimeError):
    """The external scheduler broke the wire contract; aborts the run."""


class ExternalSchedulerBridge:
    """Lockstep client for one external scheduler subprocess."""

    def __init__(self, command: list[str]):
        self.command = command
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot start external scheduler {command}: {exc}") from exc
        self._last_time: int | None = None

    def _send(self, payload: dict) -> None:
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(payload, separators=(",", ":")) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"external scheduler pipe closed: {exc}") from exc

    def _recv(self) -> dict:
        assert self._proc.stdout is not None
        line = self._proc.stdout.readline()
        if not line:
            raise ProtocolError("external scheduler closed its output stream")
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response line: {line.strip()!r}") from exc
        if not isinstance(payload, dict):
            raise ProtocolError(f"response is not an object: {line.strip()!r}")
        return payload

    def handshake(self, total_nodes: int, timestep: int) -> None:
        self._send({"type": "init", "total_nodes": total_nodes, "timestep": timestep})
        response = self._recv()
        if response.get("type") != "ready":
            raise ProtocolError(f"expected ready handshake, got {response!r}")

    def tick(self, time: int, new_jobs: list[dict], completed: list[int]) -> list[dict]:
        """Announce this step's events and return the scheduler's running list."""
        if self._last_time is not None and time <= self._last_time:
            raise ProtocolError(f"tick time {time} does not advance past {self._last_time}")
        self._last_time = time
        self._send({"type": "tick", "time": time, "new_jobs": new_jobs, "completed": completed})
        response = self._recv()
        if response.get("type") != "running" or not isinstance(response.get("jobs"), list):
            raise ProtocolError(f"expected running response, got {response!r}")
        jobs = response["jobs"]
        seen: set[int] = set()
        for entry in jobs:
            if not isinstance(entry, dict) or "id" not in entry:
                raise ProtocolError(f"malformed job entry {entry!r}")
            if entry["id"] in seen:
                raise ProtocolError(f"job {entry['id']} listed twice in response")
            seen.add(entry["id"])
            if ("nodes" in entry) == ("count" in entry):
                raise ProtocolError(f"job entry needs exactly one of nodes/count: {entry!r}")
        return jobs

    def close(self) -> None:
        if self._proc.stdin:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
