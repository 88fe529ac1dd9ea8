"""Node occupancy tracking: allocation, release, capacity enforcement."""

from __future__ import annotations

from bisect import insort


class ResourceError(RuntimeError):
    pass


class InsufficientNodes(ResourceError):
    def __init__(self, requested: int, free: int):
        super().__init__(f"requested {requested} nodes but only {free} free")
        self.requested = requested
        self.free = free


class NodeConflict(ResourceError):
    def __init__(self, node: int, holder: int | None, claimant: int):
        held = f"held by job {holder}" if holder is not None else "out of range"
        super().__init__(f"node {node} {held}, claimed by job {claimant}")
        self.node = node
        self.holder = holder
        self.claimant = claimant


class UnknownJob(ResourceError):
    def __init__(self, job_id: int):
        super().__init__(f"job {job_id} holds no nodes")
        self.job_id = job_id


class NodePool:
    """Mutable map of node ids in [0, total) to the job occupying them.

    Free nodes are kept sorted so allocation without an explicit placement
    deterministically takes the lowest-numbered nodes.
    """

    def __init__(self, total: int):
        if total < 1:
            raise ValueError("pool needs at least one node")
        self.total = total
        self._occupied: dict[int, int] = {}
        self._free: list[int] = list(range(total))
        self._by_job: dict[int, list[int]] = {}

    @property
    def free_count(self) -> int:
        return len(self._free)

    @property
    def occupied_count(self) -> int:
        return self.total - len(self._free)

    def free_nodes(self) -> list[int]:
        return list(self._free)

    def holder(self, node: int) -> int | None:
        return self._occupied.get(node)

    def job_nodes(self, job_id: int) -> tuple[int, ...]:
        return tuple(self._by_job.get(job_id, ()))

    def allocate(
        self,
        job_id: int,
        count: int | None = None,
        explicit: list[int] | tuple[int, ...] | None = None,
    ) -> list[int]:
        """Assign nodes to a job: explicit ids exactly, otherwise lowest free.

        Raises NodeConflict when an explicit node is occupied or invalid and
        InsufficientNodes when the pool cannot satisfy the count.
        """
        if explicit is not None:
            seen: set[int] = set()
            for node in explicit:
                if node < 0 or node >= self.total or node in seen:
                    raise NodeConflict(node, None, job_id)
                if node in self._occupied:
                    raise NodeConflict(node, self._occupied[node], job_id)
                seen.add(node)
            chosen = list(explicit)
            free_set = set(self._free)
            free_set.difference_update(chosen)
            self._free = sorted(free_set)
        else:
            if count is None:
                raise ValueError("allocate needs a count or an explicit node list")
            if count < 1:
                raise ValueError(f"allocate count must be >= 1, got {count}")
            if count > len(self._free):
                raise InsufficientNodes(count, len(self._free))
            chosen = self._free[:count]
            self._free = self._free[count:]
        for node in chosen:
            self._occupied[node] = job_id
        self._by_job.setdefault(job_id, []).extend(chosen)
        return chosen

    def release(self, job_id: int) -> list[int]:
        """Return all of a job's nodes to the free list (kept sorted)."""
        nodes = self._by_job.pop(job_id, None)
        if not nodes:
            raise UnknownJob(job_id)
        for node in nodes:
            del self._occupied[node]
            insort(self._free, node)
        return sorted(nodes)

    def check_consistent(self) -> None:
        assert len(self._occupied) + len(self._free) == self.total
        assert not set(self._occupied) & set(self._free)
