"""Job-broker fleet: poll the backfill slot, pack one bundle per broker.

Each broker cycles through fetch -> stage-in -> poll -> submit -> monitor
-> stage-out, with at most one outstanding bundle at any time. A bundle
wraps one full-node payload per worker node and is sized to the reported
slot, clamped to the fleet's node bounds; slots shorter than the minimum
useful walltime (the mean time to process one payload) are declined and
re-polled later.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import metrics
from .scheduler import BACKFILL, BatchJob
from .simcore import Simulation
from .workload import (ContentionModel, IoProfile, SimJobSpec,
                       job_makespans_batch)


@dataclass(frozen=True)
class StageModel:
    """Transfer duration: constant plus per-gigabyte cost."""

    base_s: float = 300.0
    per_gb_s: float = 40.0

    def duration(self, gb: float) -> int:
        return max(1, int(math.ceil(self.base_s + self.per_gb_s * gb)))


@dataclass(frozen=True)
class FailureModel:
    payload_failure_prob: float = 0.136
    cause_mix: tuple[tuple[str, float], ...] = (
        ("broker", 0.19), ("dispatcher", 0.29), ("payload", 0.13), ("other", 0.39))

    def __post_init__(self):
        if not 0 <= self.payload_failure_prob <= 1:
            raise ValueError("failure probability must be in [0, 1]")
        total = sum(w for _, w in self.cause_mix)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"cause mix must sum to 1, got {total}")

    def draw_causes(self, n: int, rng: np.random.Generator) -> list[Optional[str]]:
        """None means the payload succeeded; otherwise the failure cause."""
        failed = rng.random(n) < self.payload_failure_prob
        causes: list[Optional[str]] = [None] * n
        idx = np.flatnonzero(failed)
        if len(idx):
            names = [name for name, _ in self.cause_mix]
            weights = np.array([w for _, w in self.cause_mix])
            picks = rng.choice(len(names), size=len(idx), p=weights / weights.sum())
            for i, pick in zip(idx, picks):
                causes[i] = names[pick]
        return causes


@dataclass(frozen=True)
class BrokerConfig:
    n_brokers: int = 20
    min_slot_walltime_s: int = 6300
    events_per_job: int = 100
    max_nodes_per_bundle: int = 300
    min_nodes_per_bundle: int = 15
    poll_interval_s: int = 540
    slots_per_node: int = 16
    sizing_policy: str = "fixed"  # "fixed" or "fit_walltime"
    stage_in: StageModel = StageModel()
    stage_out: StageModel = StageModel()
    failure: FailureModel = FailureModel()

    def __post_init__(self):
        if self.n_brokers < 1:
            raise ValueError("need at least one broker")
        if self.min_nodes_per_bundle > self.max_nodes_per_bundle:
            raise ValueError("bundle node floor exceeds ceiling")
        if self.sizing_policy not in ("fixed", "fit_walltime"):
            raise ValueError(f"unknown sizing policy {self.sizing_policy!r}")


@dataclass
class Bundle:
    id: str
    nodes: int
    walltime: int
    events_per_payload: int
    submit_time: int
    start_time: Optional[int] = None
    end_time: Optional[int] = None
    killed: bool = False
    makespans: Optional[np.ndarray] = field(default=None, repr=False)
    outcomes: list = field(default_factory=list, repr=False)

    @property
    def payloads_done(self) -> int:
        return sum(1 for o in self.outcomes if o is None)

    @property
    def payloads_failed(self) -> int:
        return sum(1 for o in self.outcomes if o is not None)


def bundle_outcomes(makespans: np.ndarray, elapsed: float,
                    failure_model: FailureModel,
                    rng: np.random.Generator) -> list[Optional[str]]:
    """Final per-payload outcome: walltime cut-offs fail outright, the
    rest succeed unless the failure draw says otherwise."""
    causes = failure_model.draw_causes(len(makespans), rng)
    return ["walltime" if m > elapsed else causes[i]
            for i, m in enumerate(makespans)]


def fleet_efficiency(polls, consumption, window: tuple[int, int],
                     poll_interval_s: int, cores_per_node: int = 16,
                     avail_core_hours: Optional[float] = None) -> Optional[float]:
    """Consumed backfill core-hours over total backfill availability;
    None when there was no availability in the window."""
    if avail_core_hours is None:
        avail_core_hours = metrics.total_backfill_availability(
            polls, window, poll_interval_s, cores_per_node)
    if avail_core_hours <= 0:
        return None
    return metrics.consumed_core_hours(consumption, window) / avail_core_hours


class JobSource:
    """Queue of payload descriptions; infinite by default."""

    def __init__(self, total: Optional[int] = None):
        self.total = total
        self.taken = 0

    @property
    def infinite(self) -> bool:
        return self.total is None

    def remaining(self) -> Optional[int]:
        return None if self.infinite else max(0, self.total - self.taken)

    def take(self, n: int) -> int:
        if self.infinite:
            self.taken += n
            return n
        grant = min(n, self.total - self.taken)
        self.taken += grant
        return grant

    def put_back(self, n: int) -> None:
        if not self.infinite:
            self.taken -= n


class Broker:
    """One broker: single outstanding bundle, phase-driven."""

    IDLE = "idle"
    STAGING_IN = "staging_in"
    POLLING = "slot_polling"
    SUBMITTED = "submitted"
    STAGING_OUT = "staging_out"

    def __init__(self, fleet: "BrokerFleet", index: int):
        self.fleet = fleet
        self.index = index
        self.phase = self.IDLE
        self.bundle: Optional[Bundle] = None
        self.rng = fleet.sim.rng(f"broker-{index}")
        self._counter = 0

    def start(self, at: int) -> None:
        self.fleet.sim.schedule(at, "broker_fetch", self._fetch, target=self._name)

    @property
    def _name(self) -> str:
        return f"broker-{self.index}"

    def _fetch(self) -> None:
        # Work descriptions are fetched ahead of staging; an empty finite
        # source puts the broker to sleep until new work is added.
        if not self.fleet.source.infinite and self.fleet.source.remaining() < \
                self.fleet.cfg.min_nodes_per_bundle:
            self.phase = self.IDLE
            self.fleet.sleeping.append(self)
            return
        self.phase = self.STAGING_IN
        # Inputs are staged before the slot is known, so the transfer covers
        # a full-size bundle's worth of payloads.
        per_node = float(self.fleet.io.read_gb_per_node.sample(1, self.rng)[0])
        gb = per_node * self.fleet.cfg.max_nodes_per_bundle
        delay = self.fleet.cfg.stage_in.duration(gb)
        self.fleet.sim.schedule_in(delay, "broker_staged_in", self._poll, target=self._name)

    def _poll(self) -> None:
        self.phase = self.POLLING
        cfg = self.fleet.cfg
        slot = self.fleet.cluster.query_backfill()
        if slot.walltime >= cfg.min_slot_walltime_s and slot.nodes >= cfg.min_nodes_per_bundle:
            self._submit(slot)
        else:
            self.fleet.sim.schedule_in(cfg.poll_interval_s, "broker_repoll",
                                       self._poll, target=self._name)

    def _submit(self, slot) -> None:
        cfg = self.fleet.cfg
        nodes = min(slot.nodes, cfg.max_nodes_per_bundle)
        granted = self.fleet.source.take(nodes)
        if granted < cfg.min_nodes_per_bundle:
            self.fleet.source.put_back(granted)
            self.phase = self.IDLE
            self.fleet.sleeping.append(self)
            return
        nodes = granted
        cap = self.fleet.cluster.config.cap_for(nodes, BACKFILL)
        walltime = min(slot.walltime, cap)
        if walltime < cfg.min_slot_walltime_s:
            # the clamped bundle falls into a tighter walltime band; the
            # floor still binds, so decline and poll again
            self.fleet.source.put_back(granted)
            self.fleet.sim.schedule_in(cfg.poll_interval_s, "broker_repoll",
                                       self._poll, target=self._name)
            return
        events = cfg.events_per_job
        if cfg.sizing_policy == "fit_walltime":
            mean_event = self.fleet.payload_model.mean()
            budget = walltime - self.fleet.setup_s
            events = max(1, cfg.slots_per_node * int(budget // mean_event))
        spec = SimJobSpec(events=events, slots_per_node=cfg.slots_per_node)
        makespans = job_makespans_batch(nodes, spec, self.fleet.payload_model,
                                        self.rng, contention=self.fleet.contention,
                                        setup_s=self.fleet.setup_s)
        runtime = max(1, int(math.ceil(float(makespans.max()))))
        bundle = Bundle(id=f"bundle-{self.index}-{self._counter}", nodes=nodes,
                        walltime=walltime, events_per_payload=events,
                        submit_time=self.fleet.sim.now, makespans=makespans)
        self._counter += 1
        self.bundle = bundle
        self.phase = self.SUBMITTED
        job = BatchJob(nodes=nodes, walltime=walltime, priority_class=BACKFILL,
                       runtime=runtime, id=bundle.id,
                       on_start=lambda j: self._on_start(j),
                       on_end=lambda j: self._on_end(j))
        self.fleet.cluster.submit(job)

    def _on_start(self, job: BatchJob) -> None:
        self.bundle.start_time = job.start_time

    def _on_end(self, job: BatchJob) -> None:
        bundle = self.bundle
        bundle.end_time = job.end_time
        bundle.killed = job.killed
        elapsed = job.end_time - job.start_time
        bundle.outcomes = bundle_outcomes(bundle.makespans, elapsed,
                                          self.fleet.cfg.failure, self.rng)
        self.fleet.record_bundle(bundle)
        self.phase = self.STAGING_OUT
        per_node = float(self.fleet.io.written_gb_per_node.sample(1, self.rng)[0])
        gb = per_node * bundle.nodes
        delay = self.fleet.cfg.stage_out.duration(gb)
        self.fleet.sim.schedule_in(delay, "broker_staged_out", self._cycle,
                                   target=self._name)

    def _cycle(self) -> None:
        self.bundle = None
        self.phase = self.IDLE
        self._fetch()


class BrokerFleet:
    """All brokers plus the shared ledgers they write."""

    def __init__(self, sim: Simulation, cluster, cfg: BrokerConfig,
                 payload_model, setup_s: float = 265.0,
                 contention: Optional[ContentionModel] = None,
                 io_profile: Optional[IoProfile] = None,
                 source: Optional[JobSource] = None):
        self.sim = sim
        self.cluster = cluster
        self.cfg = cfg
        self.payload_model = payload_model
        self.setup_s = setup_s
        self.contention = contention if contention is not None else ContentionModel()
        self.io = io_profile if io_profile is not None else IoProfile.default()
        self.source = source if source is not None else JobSource()
        self.brokers = [Broker(self, i) for i in range(cfg.n_brokers)]
        self.sleeping: list[Broker] = []
        self.bundles: list[Bundle] = []
        self.consumption: list[metrics.ConsumptionRecord] = []
        self.outcomes: list[metrics.OutcomeRecord] = []

    def start(self, at: int = 0) -> None:
        # Staggered starts keep brokers from polling in lockstep.
        for i, broker in enumerate(self.brokers):
            broker.start(at + i)

    def add_work(self, n: int) -> None:
        """Grow a finite job source and wake any sleeping brokers."""
        if self.source.infinite:
            return
        self.source.total += n
        woken, self.sleeping = self.sleeping, []
        for broker in woken:
            broker.start(self.sim.now)

    def record_bundle(self, bundle: Bundle) -> None:
        self.bundles.append(bundle)
        self.consumption.append(metrics.ConsumptionRecord(
            job_id=bundle.id, nodes=bundle.nodes, start=bundle.start_time,
            end=bundle.end_time, cores_per_node=self.cluster.config.cores_per_node))
        for cause in bundle.outcomes:
            self.outcomes.append(metrics.OutcomeRecord(
                time=bundle.end_time, done=cause is None,
                events=bundle.events_per_payload if cause is None else 0,
                cause=cause))

    def write_bundle_log(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bundle", "submit", "start", "end", "nodes", "walltime",
                             "outcome", "payloads_done", "payloads_failed"])
            for b in self.bundles:
                outcome = "walltime_killed" if b.killed else "completed"
                writer.writerow([b.id, b.submit_time, b.start_time, b.end_time,
                                 b.nodes, b.walltime, outcome,
                                 b.payloads_done, b.payloads_failed])


class MetricsPoller:
    """Samples the backfill slot at a fixed cadence into a poll ledger."""

    def __init__(self, sim: Simulation, cluster, interval_s: int = 60):
        self.sim = sim
        self.cluster = cluster
        self.interval_s = interval_s
        self.polls: list[metrics.PollRecord] = []

    def start(self, at: int = 0) -> None:
        self.sim.schedule(at, "metrics_poll", self._poll, target="metrics-poller")

    def _poll(self) -> None:
        slot = self.cluster.query_backfill()
        self.polls.append(metrics.PollRecord(self.sim.now, slot.nodes, slot.walltime))
        self.sim.schedule_in(self.interval_s, "metrics_poll", self._poll,
                             target="metrics-poller")
