"""Scenario library: wire the models together, run, and emit CSVs.

Each named scenario reproduces one experiment family:

* ``slot_calibration`` — background load only; records the backfill-slot
  distribution a fixed-cadence poller sees.
* ``efficiency`` — background load plus a broker fleet over a multi-week
  horizon; monthly availability/consumption ledger.
* ``broker_count`` — the efficiency run at two fleet sizes, same seed.
* ``weak_scaling`` / ``multi_generation`` / ``strong_scaling`` — pilot
  runtime scaling experiments on a dedicated cluster.
* ``broker_vs_pilot`` — bundle-per-slot versus multi-generation pilot
  consumption over one shared slot sequence and seed.
* ``replay_efficiency`` — broker fleet driven by an ingested poll trace.

Scenario presets layer experiment-specific defaults (pilot sizes, task
means, walltimes) between the global defaults and the user's file; the
user file always wins.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .broker import BrokerConfig, BrokerFleet, FailureModel, JobSource, MetricsPoller, StageModel
from .config import DEFAULTS, ConfigError, _deep_merge, _load_file, config_hash, validate_config
from .metrics import (AvailabilityLedger, month_windows,
                      total_backfill_availability, window_report, write_window_reports)
from .pilot import AgentTimeline, OverheadModel, PilotDesc, PilotRuntime, Unit
from .scheduler import BACKFILL, CAPABILITY, BatchJob, ClusterConfig, EasyBackfillScheduler, ReplayScheduler
from .simcore import Simulation, stream_rng
from .traces import emit_poll_trace, ingest_poll_trace, ingest_swf, trace_summary
from .workload import (BackgroundLoadProfile, ContentionModel, EventDurationModel,
                       SetupModel, SimJobSpec, UnitDurationModel,
                       generate_background_jobs, job_makespans_batch)

SCENARIO_PRESETS: dict[str, dict] = {
    "weak_scaling": {
        "pilot": {"nodes_list": [250, 500, 1000, 2000], "units_per_node": 1,
                  "events_per_unit": 100, "unit_mean_s": 4650.0, "unit_sd_s": 4.0,
                  "walltime_s": 7200},
    },
    "multi_generation": {
        "pilot": {"nodes_list": [256, 512, 1024, 2048], "units_per_node": 5,
                  "events_per_unit": 16, "unit_mean_s": 1200.0, "unit_sd_s": 5.0,
                  "walltime_s": 10800},
    },
    "strong_scaling": {
        "pilot": {"nodes_list": [256, 512, 1024, 2048], "units_total": 2048,
                  "events_per_unit": 16, "unit_mean_s": 1200.0, "unit_sd_s": 5.0,
                  "walltime_s": 10800},
    },
}


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    engine_version: str
    outputs: dict[str, str] = field(default_factory=dict)  # path -> sha256

    def to_json(self) -> str:
        return json.dumps({
            "config_hash": self.config_hash,
            "seed": self.seed,
            "engine_version": self.engine_version,
            "outputs": dict(sorted(self.outputs.items())),
        }, indent=2, sort_keys=True)


def resolve_config(user_raw: dict) -> dict:
    """DEFAULTS < scenario preset < user overrides, then validation."""
    scenario = _deep_merge(DEFAULTS, user_raw).get("scenario")
    preset = SCENARIO_PRESETS.get(scenario, {})
    cfg = _deep_merge(_deep_merge(DEFAULTS, preset), user_raw)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_scenario_file(path) -> dict:
    return resolve_config(_load_file(Path(path).resolve()))


# -- model builders ------------------------------------------------------------


def _cluster_config(cfg: dict) -> ClusterConfig:
    c = cfg["cluster"]
    return ClusterConfig(
        total_nodes=c["total_nodes"], cores_per_node=c["cores_per_node"],
        backfill_caps=tuple((int(a), int(b)) for a, b in c["backfill_caps"]),
        capability_caps=tuple((int(a), int(b)) for a, b in c["capability_caps"]))


def _payload_model(cfg: dict) -> EventDurationModel:
    w = cfg["workload"]
    return EventDurationModel.fit(mean_s=w["event_mean_s"], sigma=w["event_sigma"],
                                  lo=w["event_min_s"], hi=w["event_max_s"],
                                  calibrated_at=w["calibrated_at"])


def _contention(cfg: dict) -> ContentionModel:
    w = cfg["workload"]
    return ContentionModel(per_event_mean_8way_s=w["contention_mean_8way_s"],
                           per_event_mean_16way_s=w["contention_mean_16way_s"])


def _setup_seconds(cfg: dict) -> int:
    w = cfg["workload"]
    return SetupModel().setup_seconds(fs=w["setup_fs"],
                                      event_source=w["setup_event_source"])


def _broker_config(cfg: dict, n_brokers: int | None = None) -> BrokerConfig:
    b = cfg["broker"]
    mix = tuple(sorted(b["failure_mix"].items()))
    return BrokerConfig(
        n_brokers=n_brokers if n_brokers is not None else b["n_brokers"],
        min_slot_walltime_s=b["min_slot_walltime_s"],
        events_per_job=b["events_per_job"],
        max_nodes_per_bundle=b["max_nodes_per_bundle"],
        min_nodes_per_bundle=b["min_nodes_per_bundle"],
        poll_interval_s=b["poll_interval_s"],
        slots_per_node=b["slots_per_node"],
        sizing_policy=b["sizing_policy"],
        stage_in=StageModel(b["stage_in_base_s"], b["stage_in_per_gb_s"]),
        stage_out=StageModel(b["stage_out_base_s"], b["stage_out_per_gb_s"]),
        failure=FailureModel(b["failure_prob"], mix))


def _overheads(cfg: dict) -> OverheadModel:
    p = cfg["pilot"]
    return OverheadModel(bootstrap_s=p["bootstrap_s"],
                         dispatch_per_unit_s=p["dispatch_per_unit_s"],
                         launch_per_unit_s=p["launch_per_unit_s"])


def _background_profile(cfg: dict) -> BackgroundLoadProfile:
    bg = cfg["background"]
    return BackgroundLoadProfile(
        target_utilization=bg["target_utilization"],
        size_mix=tuple((float(w), int(lo), int(hi)) for w, lo, hi in bg["size_mix"]),
        runtime_mean_s=bg["runtime_mean_s"], runtime_sigma=bg["runtime_sigma"],
        runtime_min_s=bg["runtime_min_s"], runtime_max_s=bg["runtime_max_s"],
        walltime_factor_lo=bg["walltime_factor_lo"],
        walltime_factor_hi=bg["walltime_factor_hi"])


# -- shared wiring --------------------------------------------------------------


def _schedule_background(sim: Simulation, cluster: EasyBackfillScheduler,
                         cfg: dict, horizon: int) -> list[BatchJob]:
    bg = cfg["background"]
    total = cluster.config.total_nodes
    cap = cluster.config.cap_for(total, CAPABILITY)
    jobs: list[BatchJob] = []
    if bg["trace_path"] is not None:
        stream = ((j.submit, j.nodes, j.runtime, j.walltime)
                  for j in ingest_swf(bg["trace_path"]) if j.submit < horizon)
    else:
        profile = _background_profile(cfg)
        if profile.target_utilization == 0:
            return jobs
        stream = generate_background_jobs(profile, horizon, sim.rng("background"),
                                          total_nodes=total, capability_cap_s=cap)
    for submit, nodes, runtime, walltime in stream:
        nodes = min(nodes, total)
        walltime = min(walltime, cluster.config.cap_for(nodes, CAPABILITY))
        runtime = min(runtime, walltime)
        job = BatchJob(nodes=nodes, walltime=walltime, runtime=max(1, runtime),
                       priority_class=CAPABILITY)
        jobs.append(job)
        sim.schedule(submit, "capability_arrival",
                     lambda j=job: cluster.submit(j), target="background")
    return jobs


def measured_utilization(jobs: list[BatchJob], total_nodes: int, horizon: int) -> float:
    busy = 0
    for job in jobs:
        if job.start_time is None:
            continue
        end = job.end_time if job.end_time is not None else horizon
        busy += job.nodes * max(0, min(end, horizon) - job.start_time)
    return busy / (total_nodes * horizon)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _finish_manifest(cfg: dict, out_dir: Path, files: list[Path]) -> RunManifest:
    manifest = RunManifest(config_hash=config_hash(cfg), seed=cfg["seed"],
                           engine_version=__version__)
    for f in files:
        digest = hashlib.sha256(f.read_bytes()).hexdigest()
        manifest.outputs[f.name] = digest
    (out_dir / "manifest.json").write_text(manifest.to_json() + "\n")
    return manifest


# -- cluster scenarios -----------------------------------------------------------


def _run_cluster(cfg: dict, with_brokers: bool, n_brokers: int | None = None):
    """Shared core of the efficiency-family scenarios."""
    horizon = int(cfg["horizon_days"] * 86400)
    sim = Simulation(seed=cfg["seed"])
    cluster = EasyBackfillScheduler(sim, _cluster_config(cfg))
    ledger = AvailabilityLedger(sim, cluster)
    background = _schedule_background(sim, cluster, cfg, horizon)
    poller = MetricsPoller(sim, cluster, cfg["metrics"]["poll_interval_s"])
    poller.start(0)
    fleet = None
    if with_brokers:
        source = JobSource(cfg["broker"]["job_limit"])
        fleet = BrokerFleet(sim, cluster, _broker_config(cfg, n_brokers),
                            payload_model=_payload_model(cfg),
                            setup_s=_setup_seconds(cfg),
                            contention=_contention(cfg), source=source)
        fleet.start(0)
    sim.run_until(horizon)
    return sim, cluster, ledger, background, poller, fleet, horizon


def _window_reports(cfg: dict, ledger, poller, fleet, horizon: int):
    credit = cfg["metrics"]["availability_credit"]
    interval = cfg["metrics"]["poll_interval_s"]
    cores = cfg["cluster"]["cores_per_node"]
    consumption = fleet.consumption if fleet else []
    outcomes = fleet.outcomes if fleet else []
    reports = []
    for label, w0, w1 in month_windows(cfg["start_date"], horizon):
        if credit == "rate":
            avail = ledger.core_hours((w0, w1), cores)
        else:
            avail = total_backfill_availability(poller.polls, (w0, w1), interval,
                                                cores, credit="walltime")
        reports.append((label, window_report(poller.polls, consumption, outcomes,
                                             (w0, w1), interval, cores,
                                             avail_core_hours=avail)))
    return reports


def _efficiency_outputs(cfg: dict, out_dir: Path, sim, cluster, ledger, background,
                        poller, fleet, horizon) -> list[Path]:
    files = []
    slots_path = out_dir / "slots.csv"
    emit_poll_trace(slots_path, poller.polls)
    files.append(slots_path)

    reports = _window_reports(cfg, ledger, poller, fleet, horizon)
    monthly = out_dir / "monthly_report.csv"
    write_window_reports(monthly, reports)
    files.append(monthly)

    ledger_path = out_dir / "ledger.csv"
    with open(ledger_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_start", "window_end", "avail_core_hours",
                         "used_core_hours", "efficiency", "jobs_done", "jobs_failed"])
        for _, r in reports:
            eff = "" if r.efficiency is None else f"{r.efficiency:.6f}"
            writer.writerow([r.window_start, r.window_end,
                             f"{r.avail_core_hours:.3f}", f"{r.used_core_hours:.3f}",
                             eff, r.jobs_done, r.jobs_failed])
    files.append(ledger_path)

    if fleet is not None:
        bundles_path = out_dir / "bundles.csv"
        fleet.write_bundle_log(bundles_path)
        files.append(bundles_path)

    stats = trace_summary(poller.polls)
    summary = {
        "horizon_s": horizon,
        "poll_count": stats["count"],
        "mean_slot_nodes": round(stats["mean_nodes"], 3),
        "mean_slot_walltime_s": round(stats["mean_walltime_s"], 3),
        "capability_utilization": round(
            measured_utilization(background, cluster.config.total_nodes, horizon), 5),
        "avail_core_hours": round(ledger.core_hours((0, horizon),
                                                    cluster.config.cores_per_node), 3),
    }
    if fleet is not None:
        used = sum(r.core_hours for r in fleet.consumption)
        summary.update({
            "used_core_hours": round(used, 3),
            "efficiency": round(used / summary["avail_core_hours"], 5)
            if summary["avail_core_hours"] else None,
            "bundles": len(fleet.bundles),
            "payloads_done": sum(b.payloads_done for b in fleet.bundles),
            "payloads_failed": sum(b.payloads_failed for b in fleet.bundles),
        })
    summary_path = out_dir / "summary.yaml"
    summary_path.write_text(yaml.safe_dump(summary, sort_keys=True))
    files.append(summary_path)
    return files


def run_efficiency(cfg: dict, out_dir: Path) -> list[Path]:
    parts = _run_cluster(cfg, with_brokers=True)
    return _efficiency_outputs(cfg, out_dir, *parts)


def run_slot_calibration(cfg: dict, out_dir: Path) -> list[Path]:
    parts = _run_cluster(cfg, with_brokers=False)
    return _efficiency_outputs(cfg, out_dir, *parts)


def run_broker_count(cfg: dict, out_dir: Path) -> list[Path]:
    counts = sorted({4, cfg["broker"]["n_brokers"]})
    rows = []
    for count in counts:
        sim, cluster, ledger, background, poller, fleet, horizon = _run_cluster(
            cfg, with_brokers=True, n_brokers=count)
        used = sum(r.core_hours for r in fleet.consumption)
        avail = ledger.core_hours((0, horizon), cluster.config.cores_per_node)
        rows.append([count, f"{used:.3f}", f"{avail:.3f}",
                     f"{used / avail:.6f}" if avail else "",
                     len(fleet.bundles), sum(b.payloads_done for b in fleet.bundles)])
    path = out_dir / "broker_count.csv"
    _write_csv(path, ["n_brokers", "used_core_hours", "avail_core_hours",
                      "efficiency", "bundles", "payloads_done"], rows)
    return [path]


# -- pilot scaling scenarios -----------------------------------------------------


def _run_one_pilot(cfg: dict, nodes: int, n_units: int) -> "PilotReport":
    p = cfg["pilot"]
    sim = Simulation(seed=cfg["seed"])
    cluster_cfg = ClusterConfig(total_nodes=nodes,
                                cores_per_node=cfg["cluster"]["cores_per_node"])
    cluster = EasyBackfillScheduler(sim, cluster_cfg)
    unit_model = UnitDurationModel(p["unit_mean_s"], p["unit_sd_s"])
    runtime = PilotRuntime(sim, cluster, _overheads(cfg), unit_model=unit_model,
                           name=f"pilot-{nodes}")
    queue_class = CAPABILITY if p["queue"] == "capability" else BACKFILL
    pid = runtime.submit_pilot(PilotDesc(nodes=nodes, walltime=p["walltime_s"],
                                         priority_class=queue_class))
    units = [Unit(id=i, events=p["events_per_unit"]) for i in range(n_units)]
    runtime.dispatch_units(pid, units)
    runtime.close(pid)
    sim.run()
    return runtime.pilot_report(pid)


def run_pilot_scaling(cfg: dict, out_dir: Path) -> list[Path]:
    p = cfg["pilot"]
    scenario = cfg["scenario"]
    rows = []
    for nodes in p["nodes_list"]:
        if p["units_total"] is not None:
            n_units = p["units_total"]
        else:
            n_units = nodes * p["units_per_node"]
        report = _run_one_pilot(cfg, nodes, n_units)
        rows.append([scenario, nodes, n_units, report.generations,
                     f"{report.duration_s:.3f}", f"{report.mean_task_s:.3f}",
                     f"{report.overhead_s:.3f}"])
    path = out_dir / "scaling.csv"
    _write_csv(path, ["scenario", "pilot_nodes", "units", "generations",
                      "pilot_duration_s", "mean_task_s", "overhead_s"], rows)
    return [path]


# -- broker versus pilot over one slot sequence ----------------------------------


def synthetic_slots(cfg: dict) -> list[tuple[int, int, int]]:
    """(observed_at, nodes, walltime) slot sequence from the compare block."""
    c = cfg["compare"]
    rng = stream_rng(cfg["seed"], "compare-slots")
    total = cfg["cluster"]["total_nodes"]
    slots = []
    for i in range(c["slots"]):
        mu_n = math.log(c["slot_nodes_mean"]) - 0.5 * c["slot_nodes_sigma"] ** 2
        nodes = int(np.clip(rng.lognormal(mu_n, c["slot_nodes_sigma"]), 1, total))
        mu_w = math.log(c["slot_walltime_mean_s"]) - 0.5 * c["slot_walltime_sigma"] ** 2
        walltime = int(np.clip(rng.lognormal(mu_w, c["slot_walltime_sigma"]), 60, 86400))
        slots.append((i * c["slot_interval_s"], nodes, walltime))
    return slots


def consume_slot_broker(nodes: int, walltime: int, makespans: np.ndarray,
                        cores: int) -> tuple[float, int, float]:
    """(core-hours, payloads done, held seconds) for one bundle sized to the
    slot: the job ends when its slowest payload does, or at walltime."""
    duration = min(walltime, int(math.ceil(float(makespans.max()))))
    done = int(np.sum(makespans <= duration))
    return nodes * cores * duration / 3600.0, done, duration


def consume_slot_pilot(nodes: int, walltime: int, durations: np.ndarray,
                       overheads: OverheadModel, cores: int,
                       events_per_unit: int) -> tuple[float, int]:
    """(core-hours, units done) for a pilot holding the slot to its walltime
    and running generations of units drawn from the same payload pool."""
    timeline = AgentTimeline(nodes, walltime, overheads)
    units = [Unit(id=i, events=events_per_unit, duration_s=float(d))
             for i, d in enumerate(durations)]
    timeline.add_units(units)
    timeline.finalize()
    done = sum(1 for u in timeline.units if u.state == "done")
    return nodes * cores * walltime / 3600.0, done


def run_broker_vs_pilot(cfg: dict, out_dir: Path) -> list[Path]:
    cluster_cfg = _cluster_config(cfg)
    model = _payload_model(cfg)
    contention = _contention(cfg)
    setup = _setup_seconds(cfg)
    overheads = _overheads(cfg)
    b = cfg["broker"]
    cores = cluster_cfg.cores_per_node
    spec = SimJobSpec(events=b["events_per_job"], slots_per_node=b["slots_per_node"])
    mean_payload = setup + model.mean() * b["events_per_job"] / b["slots_per_node"]
    rows = []
    for i, (at, slot_nodes, slot_walltime) in enumerate(synthetic_slots(cfg)):
        accepted = (slot_nodes >= b["min_nodes_per_bundle"]
                    and slot_walltime >= b["min_slot_walltime_s"])
        if not accepted:
            rows.append([i, at, slot_nodes, slot_walltime, 0, 0, 0,
                         "0.000", "0.000", 0, 0, 0])
            continue
        nodes = min(slot_nodes, b["max_nodes_per_bundle"])
        walltime = min(slot_walltime, cluster_cfg.cap_for(nodes, BACKFILL))
        generations = int(walltime / mean_payload) + 2
        rng = stream_rng(cfg["seed"], f"compare-payloads-{i}")
        pool = job_makespans_batch(nodes * generations, spec, model, rng,
                                   contention=contention, setup_s=setup)
        pool = pool.reshape(generations, nodes)
        broker_ch, broker_done, held = consume_slot_broker(nodes, walltime,
                                                           pool[0], cores)
        pilot_ch, pilot_done = consume_slot_pilot(nodes, walltime, pool.ravel(),
                                                  overheads, cores,
                                                  b["events_per_job"])
        residual = walltime - held
        rows.append([i, at, slot_nodes, slot_walltime, 1, nodes, walltime,
                     f"{broker_ch:.3f}", f"{pilot_ch:.3f}", broker_done,
                     pilot_done, int(residual)])
    path = out_dir / "broker_vs_pilot.csv"
    _write_csv(path, ["slot", "observed_at", "slot_nodes", "slot_walltime_s",
                      "accepted", "bundle_nodes", "walltime_s",
                      "broker_core_hours", "pilot_core_hours",
                      "broker_payloads_done", "pilot_units_done", "residual_s"],
               rows)
    return [path]


# -- replay ----------------------------------------------------------------------


def run_replay_efficiency(cfg: dict, out_dir: Path) -> list[Path]:
    # Replayed records are stale snapshots of a world that never saw this
    # fleet, so availability is credited per record as nodes x cores x
    # walltime: each record is a rectangle the fleet can take at most once,
    # which keeps used <= avail by construction.
    records = ingest_poll_trace(cfg["replay"]["trace_path"])
    horizon = int(cfg["horizon_days"] * 86400)
    sim = Simulation(seed=cfg["seed"])
    cluster = ReplayScheduler(sim, records, _cluster_config(cfg))
    source = JobSource(cfg["broker"]["job_limit"])
    fleet = BrokerFleet(sim, cluster, _broker_config(cfg),
                        payload_model=_payload_model(cfg),
                        setup_s=_setup_seconds(cfg), contention=_contention(cfg),
                        source=source)
    fleet.start(0)
    sim.run_until(horizon)

    interval = cfg["metrics"]["poll_interval_s"]
    cores = cfg["cluster"]["cores_per_node"]
    reports = []
    for label, w0, w1 in month_windows(cfg["start_date"], horizon):
        avail = total_backfill_availability(records, (w0, w1), interval, cores,
                                            credit="walltime")
        reports.append((label, window_report(records, fleet.consumption,
                                             fleet.outcomes, (w0, w1), interval,
                                             cores, avail_core_hours=avail)))
    files = []
    monthly = out_dir / "monthly_report.csv"
    write_window_reports(monthly, reports)
    files.append(monthly)
    bundles_path = out_dir / "bundles.csv"
    fleet.write_bundle_log(bundles_path)
    files.append(bundles_path)
    return files


# -- entry point -------------------------------------------------------------------


_RUNNERS = {
    "efficiency": run_efficiency,
    "slot_calibration": run_slot_calibration,
    "broker_count": run_broker_count,
    "weak_scaling": run_pilot_scaling,
    "multi_generation": run_pilot_scaling,
    "strong_scaling": run_pilot_scaling,
    "broker_vs_pilot": run_broker_vs_pilot,
    "replay_efficiency": run_replay_efficiency,
}


def run_scenario(cfg: dict, base_dir: Path | str = ".") -> RunManifest:
    """Execute a resolved scenario config; returns the manifest of outputs."""
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    out_dir = Path(base_dir) / cfg["output_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    files = _RUNNERS[cfg["scenario"]](cfg, out_dir)
    return _finish_manifest(cfg, out_dir, files)
