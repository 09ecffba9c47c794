"""
Broker fleet over backfill gaps
===============================

Three simulated days of the full pipeline: calibrated capability load
keeps the machine ~96% busy, a fleet of brokers polls the scheduler for
backfill slots and packs one bundle each, and the accounting ledger
reports how much of the leftover capacity they captured.

Takes about ten seconds.
"""

from backfillsim.metrics import consumed_core_hours
from backfillsim.scenarios import _run_cluster, measured_utilization, resolve_config
from backfillsim.traces import trace_summary

cfg = resolve_config({"scenario": "efficiency", "seed": 1, "horizon_days": 3})
sim, cluster, ledger, background, poller, fleet, horizon = _run_cluster(
    cfg, with_brokers=True)

util = measured_utilization(background, cluster.config.total_nodes, horizon)
stats = trace_summary(poller.polls)
print(f"capability utilization: {util:.3f}")
print(f"slot distribution seen by the poller: mean {stats['mean_nodes']:.0f} nodes, "
      f"mean walltime {stats['mean_walltime_s']/60:.0f} min")

avail = ledger.core_hours((0, horizon), cluster.config.cores_per_node)
used = consumed_core_hours(fleet.consumption, (0, horizon))
print(f"\nbackfill availability: {avail/1e3:.0f}k core-hours")
print(f"consumed by {cfg['broker']['n_brokers']} brokers: {used/1e3:.0f}k "
      f"core-hours (efficiency {used/avail:.1%})")

done = sum(b.payloads_done for b in fleet.bundles)
failed = sum(b.payloads_failed for b in fleet.bundles)
print(f"bundles: {len(fleet.bundles)}, payloads done: {done}, failed: {failed} "
      f"({failed/(done+failed):.1%})")
print(f"events processed: {done * cfg['broker']['events_per_job']}")

sizes = sorted(b.nodes for b in fleet.bundles)
print(f"bundle sizes: min {sizes[0]}, median {sizes[len(sizes)//2]}, "
      f"max {sizes[-1]} nodes (floors: 15..300)")
