"""Batch cluster model with EASY backfill and a backfill-slot query.

Homogeneous worker nodes, a priority queue (capability jobs above
lowest-priority backfill jobs), and EASY backfill: the head of the queue
gets an earliest-start reservation over projected completions; any other
waiting job is dispatched immediately iff it fits the idle nodes without
pushing that reservation back.

`query_backfill()` mirrors a `showbf`-style scheduler interrogation: it
reports the (nodes, walltime) rectangle that a lowest-priority job could
occupy right now without delaying the reserved head job. Submitting a
job shaped exactly like the report is guaranteed to start immediately.

Projected completions use requested walltime, the standard backfill
assumption; jobs that finish early trigger a fresh scheduling pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .simcore import SimEvent, SimTime, Simulation

CAPABILITY = "capability"
BACKFILL = "backfill_lowest"

_PRIORITY_RANK = {CAPABILITY: 0, BACKFILL: 1}


class SubmitError(Exception):
    """Job rejected at submission (malformed or over policy caps)."""


class UnknownJobError(Exception):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    """Machine profile. The default mirrors a leadership-class system:
    18,688 nodes, 16 cores each, 2 h walltime cap for small lowest-priority
    jobs. Caps are (max_nodes_in_band, cap_seconds) pairs; a job falls in
    the first band whose node bound it does not exceed.
    """

    total_nodes: int = 18688
    cores_per_node: int = 16
    backfill_caps: tuple[tuple[int, int], ...] = ((3749, 7200), (1 << 31, 86400))
    capability_caps: tuple[tuple[int, int], ...] = (((1 << 31), 86400),)

    def cap_for(self, nodes: int, priority_class: str) -> int:
        bands = self.backfill_caps if priority_class == BACKFILL else self.capability_caps
        for band_max, cap in bands:
            if nodes <= band_max:
                return cap
        return bands[-1][1]


@dataclass
class BatchJob:
    """A scheduler-visible job.

    `runtime` is the actual duration when known up front (trace/background
    jobs). Leave it None for jobs whose duration is decided by their owner
    (bundles, pilots): the owner must call `terminate()` before the
    walltime limit or the job is killed at `start + walltime`.
    """

    nodes: int
    walltime: int
    priority_class: str = CAPABILITY
    runtime: Optional[int] = None
    id: Optional[str] = None
    submit_time: Optional[SimTime] = None
    start_time: Optional[SimTime] = None
    end_time: Optional[SimTime] = None
    killed: bool = False
    on_start: Optional[Callable[["BatchJob"], None]] = field(default=None, repr=False)
    on_end: Optional[Callable[["BatchJob"], None]] = field(default=None, repr=False)
    _seq: int = field(default=-1, repr=False)
    _end_event: Optional[SimEvent] = field(default=None, repr=False)


@dataclass(frozen=True)
class BackfillSlot:
    nodes: int
    walltime: int
    observed_at: SimTime


@dataclass(frozen=True)
class Reservation:
    """Forward reservation held by the queue head: `nodes` nodes from
    `start` to `end` (projected)."""

    job_id: str
    nodes: int
    start: SimTime
    end: SimTime


class EasyBackfillScheduler:
    def __init__(self, sim: Simulation, config: ClusterConfig = ClusterConfig(),
                 strict_checks: bool = False):
        self.sim = sim
        self.config = config
        self.free_nodes = config.total_nodes
        self.queue: list[BatchJob] = []
        self.running: dict[str, BatchJob] = {}
        self.finished: list[BatchJob] = []
        self.backfill_nodes_held = 0
        self.strict_checks = strict_checks
        self.state_listeners: list[Callable[[], None]] = []
        self._submit_counter = 0
        self._pass_event: Optional[SimEvent] = None
        self._version = 0

    # -- public operations ----------------------------------------------------

    def submit(self, job: BatchJob) -> str:
        """Validate and enqueue a job; a scheduling pass runs at the current
        simulated second (after any other events already pending at it)."""
        if job.nodes < 1:
            raise SubmitError(f"job requests {job.nodes} nodes; need at least 1")
        if job.nodes > self.config.total_nodes:
            raise SubmitError(
                f"job requests {job.nodes} nodes; cluster has {self.config.total_nodes}")
        if job.walltime <= 0:
            raise SubmitError(f"walltime must be positive, got {job.walltime}")
        if job.priority_class not in _PRIORITY_RANK:
            raise SubmitError(f"unknown priority class {job.priority_class!r}")
        cap = self.config.cap_for(job.nodes, job.priority_class)
        if job.walltime > cap:
            raise SubmitError(
                f"walltime {job.walltime}s exceeds the {cap}s cap for "
                f"{job.nodes}-node {job.priority_class} jobs")
        if job.runtime is not None and job.runtime < 1:
            raise SubmitError(f"runtime must be >= 1s when given, got {job.runtime}")
        if job.id is None:
            job.id = f"job-{self._submit_counter}"
        job._seq = self._submit_counter
        self._submit_counter += 1
        job.submit_time = self.sim.now
        self.queue.append(job)
        self._touch()
        self._request_pass()
        return job.id

    def terminate(self, job_id: str, at: Optional[SimTime] = None) -> None:
        """End a running job now, freeing its nodes. `at`, when given, must
        equal the current clock (owners call this from their own handlers)."""
        job = self.running.get(job_id)
        if job is None:
            raise UnknownJobError(f"job {job_id!r} is not running")
        if at is not None and at != self.sim.now:
            raise ValueError(f"terminate at t={at} but clock is {self.sim.now}")
        self._finish(job)

    def query_backfill(self) -> BackfillSlot:
        """Report the backfill slot available right now.

        Returns the rectangle maximizing nodes first, then walltime: all
        currently idle nodes, for as long as they can be held without
        delaying the queue head's reservation, capped by the walltime
        policy band for that node count.
        """
        self._settle()
        idle = self.free_nodes
        now = self.sim.now
        if idle == 0:
            return BackfillSlot(0, 0, now)
        cap = self.config.cap_for(idle, BACKFILL)
        res = self._head_reservation()
        if res is None:
            return BackfillSlot(idle, cap, now)
        extra = self._extra_at_reservation(res)
        if extra >= idle:
            return BackfillSlot(idle, cap, now)
        return BackfillSlot(idle, min(res.start - now, cap), now)

    def schedule_pass(self) -> list[BatchJob]:
        """Run one EASY pass immediately; returns jobs dispatched by it."""
        if self._pass_event is not None:
            self.sim.cancel(self._pass_event)
            self._pass_event = None
        return self._run_pass()

    def head_reservation(self) -> Optional[Reservation]:
        self._settle()
        return self._head_reservation()

    def utilization_nodes(self) -> int:
        return self.config.total_nodes - self.free_nodes

    # -- internals --------------------------------------------------------------

    def _touch(self) -> None:
        self._version += 1
        for listener in self.state_listeners:
            listener()

    def _request_pass(self) -> None:
        if self._pass_event is None:
            self._pass_event = self.sim.schedule(self.sim.now, "schedule_pass",
                                                 self._deferred_pass)

    def _deferred_pass(self) -> None:
        self._pass_event = None
        self._run_pass()

    def _settle(self) -> None:
        # Queries must observe the effect of submissions made earlier in the
        # same simulated second, so flush any pending pass first.
        if self._pass_event is not None:
            self.schedule_pass()

    def _queue_order(self) -> list[BatchJob]:
        return sorted(self.queue,
                      key=lambda j: (_PRIORITY_RANK[j.priority_class], j.submit_time, j._seq))

    def _run_pass(self) -> list[BatchJob]:
        dispatched: list[BatchJob] = []
        while True:
            order = self._queue_order()
            if not order:
                break
            head = order[0]
            if head.nodes <= self.free_nodes:
                self._dispatch(head)
                dispatched.append(head)
                continue
            res = self._head_reservation()
            assert res is not None
            extra = self._extra_at_reservation(res)
            started = None
            for job in order[1:]:
                if job.nodes > self.free_nodes:
                    continue
                if self.sim.now + job.walltime <= res.start or job.nodes <= extra:
                    if self.strict_checks:
                        self._assert_no_delay(job, res)
                    self._dispatch(job)
                    dispatched.append(job)
                    started = job
                    break
            if started is None:
                break
        return dispatched

    def _dispatch(self, job: BatchJob) -> None:
        self.queue.remove(job)
        job.start_time = self.sim.now
        self.free_nodes -= job.nodes
        assert self.free_nodes >= 0, "capacity overcommitted"
        if job.priority_class == BACKFILL:
            self.backfill_nodes_held += job.nodes
        self.running[job.id] = job
        if job.runtime is not None:
            effective = min(job.runtime, job.walltime)
            kind = "job_end"
        else:
            effective = job.walltime
            kind = "walltime_kill"
        job._end_event = self.sim.schedule(self.sim.now + effective, kind,
                                           lambda j=job: self._finish(j), target=job.id)
        self._touch()
        if job.on_start is not None:
            job.on_start(job)

    def _finish(self, job: BatchJob) -> None:
        if job._end_event is not None:
            self.sim.cancel(job._end_event)
            job._end_event = None
        del self.running[job.id]
        job.end_time = self.sim.now
        job.killed = (job.end_time - job.start_time) >= job.walltime
        self.free_nodes += job.nodes
        if job.priority_class == BACKFILL:
            self.backfill_nodes_held -= job.nodes
        self.finished.append(job)
        self._touch()
        self._request_pass()
        if job.on_end is not None:
            job.on_end(job)

    def _head_reservation(self) -> Optional[Reservation]:
        order = self._queue_order()
        if not order:
            return None
        head = order[0]
        if head.nodes <= self.free_nodes:
            # A pass is pending at this second; the head starts now.
            return Reservation(head.id, head.nodes, self.sim.now,
                               self.sim.now + head.walltime)
        start = self._earliest_start(head.nodes)
        return Reservation(head.id, head.nodes, start, start + head.walltime)

    def _earliest_start(self, nodes_needed: int) -> SimTime:
        free = self.free_nodes
        releases: dict[SimTime, int] = {}
        for job in self.running.values():
            end = job.start_time + job.walltime
            releases[end] = releases.get(end, 0) + job.nodes
        for end in sorted(releases):
            free += releases[end]
            if free >= nodes_needed:
                return end
        raise AssertionError("job can never start; capacity invariant broken")

    def _extra_at_reservation(self, res: Reservation) -> int:
        # Nodes still free at the reservation start once the head begins:
        # a backfill job that small can run past the reservation harmlessly.
        free = self.free_nodes
        for job in self.running.values():
            if job.start_time + job.walltime <= res.start:
                free += job.nodes
        return free - res.nodes

    def _assert_no_delay(self, candidate: BatchJob, res: Reservation) -> None:
        free = self.free_nodes - candidate.nodes
        releases: dict[SimTime, int] = {}
        for job in self.running.values():
            end = job.start_time + job.walltime
            releases[end] = releases.get(end, 0) + job.nodes
        cand_end = self.sim.now + candidate.walltime
        releases[cand_end] = releases.get(cand_end, 0) + candidate.nodes
        for end in sorted(releases):
            free += releases[end]
            if free >= res.nodes:
                if end > res.start:
                    raise AssertionError(
                        f"backfill dispatch of {candidate.id} would delay "
                        f"reservation of {res.job_id} from {res.start} to {end}")
                return


class ReplayScheduler:
    """Slot source driven by a recorded poll trace instead of a live queue.

    Each `query_backfill()` returns the next trace record verbatim.
    Submitted jobs start immediately (the premise of the slot report) and
    are not capacity-checked against each other; this mode exists to replay
    recorded availability, not to model contention.
    """

    def __init__(self, sim: Simulation, records: Iterable, config: ClusterConfig = ClusterConfig()):
        self.sim = sim
        self.config = config
        self.records = list(records)
        self.cursor = 0
        self.running: dict[str, BatchJob] = {}
        self.finished: list[BatchJob] = []
        self.backfill_nodes_held = 0
        self._submit_counter = 0

    @property
    def exhausted(self) -> bool:
        return self.cursor >= len(self.records)

    def query_backfill(self) -> BackfillSlot:
        if self.exhausted:
            return BackfillSlot(0, 0, self.sim.now)
        rec = self.records[self.cursor]
        self.cursor += 1
        return BackfillSlot(rec.nodes, rec.walltime, self.sim.now)

    def submit(self, job: BatchJob) -> str:
        if job.id is None:
            job.id = f"job-{self._submit_counter}"
        self._submit_counter += 1
        job.submit_time = job.start_time = self.sim.now
        self.running[job.id] = job
        if job.priority_class == BACKFILL:
            self.backfill_nodes_held += job.nodes
        effective = job.walltime if job.runtime is None else min(job.runtime, job.walltime)
        job._end_event = self.sim.schedule(self.sim.now + effective, "job_end",
                                           lambda j=job: self._finish(j), target=job.id)
        if job.on_start is not None:
            job.on_start(job)
        return job.id

    def terminate(self, job_id: str, at: Optional[SimTime] = None) -> None:
        job = self.running.get(job_id)
        if job is None:
            raise UnknownJobError(f"job {job_id!r} is not running")
        self._finish(job)

    def _finish(self, job: BatchJob) -> None:
        if job._end_event is not None:
            self.sim.cancel(job._end_event)
            job._end_event = None
        del self.running[job.id]
        job.end_time = self.sim.now
        job.killed = (job.end_time - job.start_time) >= job.walltime
        if job.priority_class == BACKFILL:
            self.backfill_nodes_held -= job.nodes
        self.finished.append(job)
        if job.on_end is not None:
            job.on_end(job)
