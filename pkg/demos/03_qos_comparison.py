#!/usr/bin/env python3
"""Latency and energy of the three QoS strategies, in thirty seconds or so.

A three-port 10G bundle carries ~8.1 Gb/s of bursty bulk traffic (it fits
on one port) plus a 100 Mb/s stream of small time-critical frames. The same
traffic runs under the conservative baseline and the two QoS-aware
algorithms; only the placement of the time-critical flow changes.
"""

from eeesim import run
from eeesim.scenarios import Scenario, build_sim_config, build_stream

scenario = Scenario(
    name="qos-demo",
    sim={
        "n_ports": 3,
        "capacity_bps": 10_000_000_000,
        "sampling_period_ns": 50_000_000,
        "warmup_ns": 100_000_000,
        "duration_ns": 150_000_000,
    },
    sources=[
        {"kind": "bursty", "flow": f"bulk{i}", "size": 1500, "dscp": 0,
         "rate_bps": 4_062_480_000, "line_rate_bps": 10_000_000_000,
         "burst_pkts": 500}
        for i in range(2)
    ],
    ll_source={"kind": "frames", "flow": "voice", "size": 125, "dscp": 46,
               "line_rate_bps": 10_000_000_000},
    algorithms=["conservative", "spare_port", "two_queues"],
    ll_rates_bps=[100_000_000],
)

point = scenario.sweep_points()[0]
print("bulk ~8.1 Gb/s on one active port, 100 Mb/s of 125 B voice frames\n")
header = (f"{'algorithm':<14} {'voice mean':>11} {'voice p99':>10} "
          f"{'bulk mean':>10} {'energy':>8} {'ports':>6}")
print(header)
print("-" * len(header))
for algorithm in scenario.algorithms:
    config = build_sim_config(scenario, algorithm)
    report = run(config, build_stream(scenario, point))
    voice = report.delay["low_latency"]
    bulk = report.delay["normal"]
    print(f"{algorithm:<14} {voice['mean_us']:>9.2f}us {voice['p99_us']:>8.2f}us "
          f"{bulk['mean_us']:>8.1f}us {report.normalized_energy:>8.4f} "
          f"{report.mean_active_ports:>6.2f}")

print("""
What to look for:
 * conservative leaves voice frames queueing behind bulk bursts;
 * spare_port pins voice to an otherwise sleeping port: every frame pays
   one 4.48 us wake-up (plus 0.1 us wire time) and nothing else, at the
   price of keeping an extra port partly awake;
 * two_queues rides the bulk port's high-priority queue: usually under
   2 us, and the bundle's energy is bit-for-bit the conservative one.""")
