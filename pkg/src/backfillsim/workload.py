"""Statistical models of the detector-simulation payload and of the
background capability load that creates backfill gaps.

The payload model has three layers:

* per-event simulation time: truncated log-normal, bounded to [2, 40]
  minutes with a 14-minute mean at the calibration concurrency (16
  workers per node);
* core contention: a multiplicative slowdown between 8-way (10.8 min
  per-event mean) and 16-way (14.25 min) operation, linear in between;
* per-node job makespan: greedy list scheduling of the event tasks over
  the node's worker slots, plus a constant framework setup time.

I/O volumes per bundle follow the measured per-job statistics (clipped
normals, mean-corrected so the clipped mean matches the measured mean);
they feed stage-in/out durations and reporting only, never event timing.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri
from scipy.stats import norm

MINUTE = 60.0


# ---------------------------------------------------------------------------
# per-event duration


def _truncated_lognormal_mean(mu: float, sigma: float, lo: float, hi: float) -> float:
    a = (math.log(lo) - mu) / sigma
    b = (math.log(hi) - mu) / sigma
    z = ndtr(b) - ndtr(a)
    return math.exp(mu + 0.5 * sigma * sigma) * (ndtr(b - sigma) - ndtr(a - sigma)) / z


@dataclass(frozen=True)
class EventDurationModel:
    """Truncated log-normal event simulation time, in seconds.

    `calibrated_at` records the per-node concurrency at which the mean was
    measured; contention scaling is applied relative to it.
    """

    mu: float
    sigma: float
    lo: float = 2 * MINUTE
    hi: float = 40 * MINUTE
    calibrated_at: int = 16

    @classmethod
    def fit(cls, mean_s: float = 14 * MINUTE, sigma: float = 0.7,
            lo: float = 2 * MINUTE, hi: float = 40 * MINUTE,
            calibrated_at: int = 16) -> "EventDurationModel":
        """Solve for the log-space location so the truncated mean is `mean_s`."""
        if not lo < mean_s < hi:
            raise ValueError(f"target mean {mean_s} outside bounds [{lo}, {hi}]")
        f = lambda mu: _truncated_lognormal_mean(mu, sigma, lo, hi) - mean_s
        mu = brentq(f, math.log(lo), math.log(hi), xtol=1e-10)
        return cls(mu=mu, sigma=sigma, lo=lo, hi=hi, calibrated_at=calibrated_at)

    def mean(self) -> float:
        return _truncated_lognormal_mean(self.mu, self.sigma, self.lo, self.hi)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF sampling in log space; every draw lies in [lo, hi]."""
        a = ndtr((math.log(self.lo) - self.mu) / self.sigma)
        b = ndtr((math.log(self.hi) - self.mu) / self.sigma)
        u = rng.uniform(a, b, size=n)
        x = np.exp(self.mu + self.sigma * ndtri(u))
        return np.clip(x, self.lo, self.hi)

    def scaled(self, factor: float) -> "EventDurationModel":
        """Same shape, all durations multiplied by `factor`."""
        return EventDurationModel(mu=self.mu + math.log(factor), sigma=self.sigma,
                                  lo=self.lo * factor, hi=self.hi * factor,
                                  calibrated_at=self.calibrated_at)


@dataclass(frozen=True)
class ConstantDurationModel:
    """Degenerate event model for arithmetic checks and scaling scenarios."""

    value_s: float
    calibrated_at: int = 16

    def mean(self) -> float:
        return self.value_s

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.full(n, self.value_s)


def sample_event_durations(model, n: int, rng: np.random.Generator) -> np.ndarray:
    if n <= 0:
        raise ValueError("n must be positive")
    return model.sample(n, rng)


# ---------------------------------------------------------------------------
# contention


@dataclass(frozen=True)
class ContentionModel:
    """Multiplicative per-event slowdown versus 8-way concurrency.

    Two cores share one floating-point scheduler, so 16-way operation pays
    ~32% over 8-way; intermediate concurrency interpolates linearly.
    """

    per_event_mean_8way_s: float = 10.8 * MINUTE
    per_event_mean_16way_s: float = 14.25 * MINUTE

    def slowdown(self, concurrency: int) -> float:
        ratio = self.per_event_mean_16way_s / self.per_event_mean_8way_s
        if concurrency <= 8:
            return 1.0
        if concurrency >= 16:
            return ratio
        return 1.0 + (ratio - 1.0) * (concurrency - 8) / 8.0

    def scale(self, concurrency: int, calibrated_at: int = 16) -> float:
        """Factor applied to draws from a model calibrated at `calibrated_at`."""
        return self.slowdown(concurrency) / self.slowdown(calibrated_at)


# ---------------------------------------------------------------------------
# framework setup


@dataclass(frozen=True)
class SetupModel:
    """Constant framework initialization and event-read times (seconds)."""

    shared_fs_setup_s: int = 6300
    readonly_fs_setup_s: int = 225
    event_read_s: int = 1320
    ramdisk_event_read_s: int = 40

    def setup_seconds(self, fs: str = "readonly", event_source: str = "ramdisk") -> int:
        if fs not in ("shared", "readonly"):
            raise ValueError(f"fs must be 'shared' or 'readonly', got {fs!r}")
        if event_source not in ("shared", "ramdisk"):
            raise ValueError(f"event_source must be 'shared' or 'ramdisk', got {event_source!r}")
        setup = self.shared_fs_setup_s if fs == "shared" else self.readonly_fs_setup_s
        read = self.event_read_s if event_source == "shared" else self.ramdisk_event_read_s
        return setup + read


# ---------------------------------------------------------------------------
# per-bundle I/O volumes


def _clipped_normal_mean(mu: float, sd: float, lo: float, hi: float) -> float:
    a = (lo - mu) / sd
    b = (hi - mu) / sd
    z = ndtr(b) - ndtr(a)
    return (lo * ndtr(a) + hi * (1.0 - ndtr(b))
            + mu * z + sd * (norm.pdf(a) - norm.pdf(b)))


@dataclass(frozen=True)
class IoChannel:
    lo: float
    hi: float
    mean: float
    sd: float
    mu: float  # pre-clip location, fit so the clipped mean equals `mean`

    @classmethod
    def fit(cls, lo: float, hi: float, mean: float, sd: float) -> "IoChannel":
        f = lambda mu: _clipped_normal_mean(mu, sd, lo, hi) - mean
        mu = brentq(f, lo - 12 * sd, hi + 12 * sd, xtol=1e-9)
        return cls(lo=lo, hi=hi, mean=mean, sd=sd, mu=mu)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.clip(rng.normal(self.mu, self.sd, size=n), self.lo, self.hi)


@dataclass(frozen=True)
class IoProfile:
    """Per-bundle I/O draws: data read/written (GB), file open/close counts,
    and the per-node volume rates used to size transfers to a node count."""

    read_gb: IoChannel
    written_gb: IoChannel
    opens: IoChannel
    closes: IoChannel
    read_gb_per_node: IoChannel
    written_gb_per_node: IoChannel

    @classmethod
    def default(cls) -> "IoProfile":
        return cls(
            read_gb=IoChannel.fit(0.01, 241.06, 20.36, 43.90),
            written_gb=IoChannel.fit(0.03, 71.71, 6.87, 12.33),
            opens=IoChannel.fit(1368, 1260185, 146459.37, 231346.55),
            closes=IoChannel.fit(349, 294908, 34155.74, 53799.08),
            read_gb_per_node=IoChannel.fit(0.00037, 0.81670, 0.38354, 0.19379),
            written_gb_per_node=IoChannel.fit(0.02485, 0.23903, 0.16794, 0.03376),
        )


# ---------------------------------------------------------------------------
# node payload makespan


@dataclass(frozen=True)
class SimJobSpec:
    """One multi-process payload on one node: `events` tasks over
    `slots_per_node` concurrent workers."""

    events: int = 100
    slots_per_node: int = 16

    def __post_init__(self):
        if self.events <= 0:
            raise ValueError("events must be positive")
        if self.slots_per_node not in (8, 16):
            raise ValueError("slots_per_node must be 8 or 16")


def list_schedule_makespan(durations: np.ndarray, slots: int) -> float:
    """Greedy list scheduling: each task goes to the earliest-free slot."""
    if len(durations) <= slots:
        return float(np.max(durations))
    finish = [0.0] * slots
    heapq.heapify(finish)
    for d in durations:
        heapq.heappush(finish, heapq.heappop(finish) + float(d))
    return max(finish)


def job_makespan(spec: SimJobSpec, model, rng: np.random.Generator,
                 contention: Optional[ContentionModel] = None,
                 setup_s: float = 0.0) -> float:
    """Setup time plus the list-scheduling makespan of the payload's events."""
    durations = model.sample(spec.events, rng)
    if contention is not None:
        durations = durations * contention.scale(spec.slots_per_node, model.calibrated_at)
    return setup_s + list_schedule_makespan(durations, spec.slots_per_node)


def job_makespans_batch(n_jobs: int, spec: SimJobSpec, model, rng: np.random.Generator,
                        contention: Optional[ContentionModel] = None,
                        setup_s: float = 0.0) -> np.ndarray:
    """Vectorized `job_makespan` for `n_jobs` independent payloads.

    Same greedy rule as the scalar path (tasks in draw order to the
    earliest-free slot), evaluated for all jobs at once.
    """
    durations = model.sample(n_jobs * spec.events, rng).reshape(n_jobs, spec.events)
    if contention is not None:
        durations = durations * contention.scale(spec.slots_per_node, model.calibrated_at)
    slots = spec.slots_per_node
    if spec.events <= slots:
        return setup_s + durations.max(axis=1)
    finish = np.zeros((n_jobs, slots))
    finish[:, :] = durations[:, :slots][:, :]  # first wave fills every slot
    rows = np.arange(n_jobs)
    for j in range(slots, spec.events):
        idx = np.argmin(finish, axis=1)
        finish[rows, idx] += durations[:, j]
    return setup_s + finish.max(axis=1)


# ---------------------------------------------------------------------------
# pilot task durations


@dataclass(frozen=True)
class UnitDurationModel:
    """Task duration for pilot units: clipped normal, tight spread.

    Units are homogeneous payloads (same event count on identical nodes),
    so the spread is small relative to the mean.
    """

    mean_s: float
    sd_s: float

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo = max(1.0, self.mean_s - 4 * self.sd_s)
        hi = self.mean_s + 4 * self.sd_s
        return np.clip(rng.normal(self.mean_s, self.sd_s, size=n), lo, hi)

    def mean(self) -> float:
        return self.mean_s


# ---------------------------------------------------------------------------
# background capability load


@dataclass(frozen=True)
class BackgroundLoadProfile:
    """Poisson stream of capability jobs sized to a target utilization.

    `size_mix` gives (weight, lo, hi) node-count bands, log-uniform within
    each band. Runtimes are log-normal (clipped); requested walltime
    overestimates the runtime by a uniform factor, which is what makes the
    scheduler's forward projections conservative.
    """

    target_utilization: float = 0.965
    size_mix: tuple[tuple[float, int, int], ...] = (
        (0.88, 1, 125),
        (0.09, 126, 312),
        (0.028, 313, 1500),
        (0.002, 1500, 6000),
    )
    runtime_mean_s: float = 10800.0
    runtime_sigma: float = 1.0
    runtime_min_s: int = 600
    runtime_max_s: int = 85000
    walltime_factor_lo: float = 1.2
    walltime_factor_hi: float = 2.0

    def mean_nodes(self) -> float:
        total = 0.0
        for w, lo, hi in self.size_mix:
            band_mean = (hi - lo) / math.log(hi / lo) if hi > lo else float(lo)
            total += w * band_mean
        return total

    def mean_runtime(self) -> float:
        # clipped log-normal mean, by the same closed form used for events
        mu = math.log(self.runtime_mean_s) - 0.5 * self.runtime_sigma ** 2
        sigma = self.runtime_sigma
        lo, hi = float(self.runtime_min_s), float(self.runtime_max_s)
        a = (math.log(lo) - mu) / sigma
        b = (math.log(hi) - mu) / sigma
        z = ndtr(b) - ndtr(a)
        inner = math.exp(mu + 0.5 * sigma * sigma) * (ndtr(b - sigma) - ndtr(a - sigma))
        return lo * ndtr(a) + hi * (1.0 - ndtr(b)) + inner


def generate_background_jobs(profile: BackgroundLoadProfile, horizon_s: int,
                             rng: np.random.Generator, total_nodes: int = 18688,
                             capability_cap_s: int = 86400):
    """Yield (submit_time, nodes, runtime, walltime) tuples over the horizon.

    The Poisson arrival rate is chosen so offered load matches the target
    utilization: rate * E[nodes] * E[runtime] == target * total_nodes.
    """
    u = profile.target_utilization
    if u == 0:
        return
    if not 0 < u < 1:
        raise ValueError(f"target utilization must be in (0, 1), got {u}")
    work_per_job = profile.mean_nodes() * profile.mean_runtime()
    rate = u * total_nodes / work_per_job  # arrivals per second
    weights = np.array([w for w, _, _ in profile.size_mix])
    weights = weights / weights.sum()
    mu = math.log(profile.runtime_mean_s) - 0.5 * profile.runtime_sigma ** 2
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t >= horizon_s:
            return
        band = rng.choice(len(weights), p=weights)
        _, lo, hi = profile.size_mix[band]
        nodes = int(round(math.exp(rng.uniform(math.log(lo), math.log(hi + 1)))))
        nodes = max(lo, min(hi, nodes))
        runtime = int(np.clip(rng.lognormal(mu, profile.runtime_sigma),
                              profile.runtime_min_s, profile.runtime_max_s))
        factor = rng.uniform(profile.walltime_factor_lo, profile.walltime_factor_hi)
        walltime = min(int(math.ceil(runtime * factor)), capability_cap_s)
        runtime = min(runtime, walltime)
        yield int(t), nodes, runtime, walltime
