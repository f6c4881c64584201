#!/usr/bin/env python3
"""Timing anatomy of a single 802.3az port.

Three tiny simulations show where low-power idle spends its microseconds:
waking an idle 10 Gb/s port, getting caught mid sleep-transition, and the
back-to-back case where arrivals chain without ever letting the port doze.
"""

from eeesim import (
    Algorithm,
    BundleConfig,
    EeePortConfig,
    Packet,
    SimConfig,
    run,
)

CAP = 10_000_000_000  # one 10GBASE-T port


def simulate(packets, title):
    config = SimConfig(
        bundle=BundleConfig(n_ports=1, capacity_bps=CAP,
                            algorithm=Algorithm.CONSERVATIVE),
        port=EeePortConfig(capacity_bps=CAP),
        duration_ns=1_000_000_000,
        warmup_ns=0,
        record_departures=True,
        record_delay_log=True,
    )
    report = run(config, packets)
    print(f"\n== {title}")
    print(f"{'frame':>6} {'arrival':>10} {'tx start':>10} {'departure':>10} {'delay':>9}")
    rows = sorted(report.delay_log, key=lambda row: row[1])
    for flow, arrival, delay, started, size in rows:
        print(f"{flow:>6} {arrival:>9}ns {started:>9}ns {arrival + delay:>9}ns "
              f"{delay / 1000:>7.2f}us")
    return report


print("Sleep entry takes 2.28 us, wake-up 4.48 us; a 1500 B frame needs 1.2 us"
      " on the wire.")

# A single frame to a port resting in low-power idle: the whole 4.48 us wake
# is paid before the first bit moves, so it departs at exactly 5.68 us.
simulate([Packet(0, 1500, "a", 0, 0)], "one frame to an idle port")

# The second frame lands 1 us after the port started its sleep transition.
# Sleeping cannot be aborted, so it waits out the rest of the sleep AND a
# full wake: 7.96 us after the transition began.
simulate(
    [Packet(0, 64, "a", 0, 0), Packet(5531, 1500, "b", 0, 1)],
    "frame arriving during the sleep transition",
)

# 125 B frames every 100 ns arrive exactly as fast as the wire drains them:
# after one wake the port never returns to idle and every frame sees the
# same 4.58 us delay.
burst = [Packet(i * 100, 125, "c", 0, i) for i in range(8)]
simulate(burst, "wire-rate train: one wake, then chained service")
