"""Deterministic discrete-event loop binding traffic, ports and allocation.

One simulation run is strictly single threaded: identical config and input
stream produce a bit-identical report. Events at the same nanosecond are
ordered by a fixed rank: control epochs first (a plan takes effect at
exactly t = nT), then arrivals, then transmit/sleep/wake completions. An
arrival that lands exactly when the wire goes idle is therefore served back
to back instead of paying a gratuitous sleep/wake cycle.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .allocation import (
    Algorithm,
    AllocationPlan,
    BundleConfig,
    allocate,
    estimate_rates,
    initial_plan,
)
from .eee_port import EeePort, EeePortConfig, PortState, Queue
from .errors import ConfigError, SimulationFault
from .traffic import DEFAULT_LL_DSCPS, TrafficClass

_RANK_EPOCH = 0
_RANK_ARRIVAL = 1
# Indexed by PortEvent value: TX_COMPLETE -> 2, SLEEP_COMPLETE -> 3, WAKE_COMPLETE -> 4.
_RANK = (2, 3, 4)

_INF = float("inf")


@dataclass
class SimConfig:
    """Everything one simulation run needs besides the packet stream."""

    bundle: BundleConfig
    port: EeePortConfig
    duration_ns: int
    sampling_period_ns: int = 500_000_000
    ll_dscps: frozenset = DEFAULT_LL_DSCPS
    warmup_ns: int | None = None  # None: one sampling period
    record_departures: bool = False
    record_delay_log: bool = False
    record_transitions: bool = False
    track_flows: frozenset = frozenset()

    def resolved_warmup(self) -> int:
        return self.sampling_period_ns if self.warmup_ns is None else self.warmup_ns

    def validate(self) -> None:
        self.bundle.validate()
        self.port.validate()
        if self.sampling_period_ns <= 0:
            raise ConfigError("sampling period must be positive")
        if self.duration_ns <= 0:
            raise ConfigError("duration must be positive")
        if not 0 <= self.resolved_warmup() < self.duration_ns:
            raise ConfigError("warmup must satisfy 0 <= warmup < duration")


class FlowTable:
    """Incumbent allocation plan plus the byte counters feeding the next epoch.

    Counters advance at dispatch time (the flow-rule view of traffic), so a
    frame that is later tail-dropped still counts toward its flow's rate.
    """

    def __init__(self, config: SimConfig):
        self.config = config
        self.algorithm = config.bundle.algorithm
        self.plan = initial_plan(self.algorithm, config.bundle.n_ports)
        self.counters: dict = {}
        self.classes: dict = {}

    def dispatch(self, pkt):
        """(port, queue) for a packet under the incumbent plan."""
        flow = pkt.flow
        counters = self.counters
        counters[flow] = counters.get(flow, 0) + pkt.size
        entry = self.plan.assignments.get(flow)
        if entry is None:
            entry = self._register(flow, pkt.dscp)
        return entry

    def _register(self, flow, dscp):
        # A flow first seen mid-interval goes to the least-loaded currently
        # active port (planned loads); the spare-port algorithm sends unknown
        # low-latency flows straight to its spare port. Re-planned next epoch.
        cls = (
            TrafficClass.LOW_LATENCY
            if dscp in self.config.ll_dscps
            else TrafficClass.NORMAL
        )
        self.classes[flow] = cls
        plan = self.plan
        if (
            plan.algorithm is Algorithm.SPARE_PORT
            and cls is TrafficClass.LOW_LATENCY
            and plan.spare_port is not None
        ):
            port = plan.spare_port
        else:
            loads = plan.port_loads
            port = min(plan.active_set, key=lambda i: (loads[i], i))
        queue = (
            Queue.HIGH
            if self.algorithm is Algorithm.TWO_QUEUES
            and cls is TrafficClass.LOW_LATENCY
            else Queue.LOW
        )
        entry = (port, queue)
        plan.assignments[flow] = entry
        return entry

    def control_epoch(self, now: int) -> AllocationPlan:
        """Estimate rates from the closed interval and install a fresh plan.

        Flows known to the previous plan but silent in the interval are
        retained at rate 0. Queued packets are not migrated; counters reset.
        """
        estimates = estimate_rates(
            self.counters,
            self.config.sampling_period_ns,
            self.classes,
            retained=self.plan.assignments,
        )
        plan = allocate(self.algorithm, estimates, self.config.bundle, epoch=now)
        self.plan = plan
        self.counters = {}
        return plan


def dispatch(packet, flow_table: FlowTable):
    """(port, queue) for a packet under the incumbent plan."""
    return flow_table.dispatch(packet)


def control_epoch(flow_table: FlowTable, config: SimConfig, now: int) -> AllocationPlan:
    """Run one control epoch against the given flow table."""
    if config is not flow_table.config:
        raise ConfigError("flow table belongs to a different configuration")
    return flow_table.control_epoch(now)


def _delay_stats(delays_ns) -> dict | None:
    if not delays_ns:
        return None
    arr = np.asarray(delays_ns, dtype=np.int64)
    return {
        "count": int(arr.size),
        "mean_us": float(arr.mean()) / 1000.0,
        "median_us": float(np.median(arr)) / 1000.0,
        "p99_us": float(np.percentile(arr, 99)) / 1000.0,
        "min_us": int(arr.min()) / 1000.0,
        "max_us": int(arr.max()) / 1000.0,
    }


@dataclass
class MetricsReport:
    """Aggregated results of one run, measured after warmup.

    ``energy_by_state_ns`` holds exact integer residence times summed over
    ports, so energy comparisons between runs can be made bit-exactly.
    """

    algorithm: str
    n_ports: int
    duration_ns: int
    warmup_ns: int
    sampling_period_ns: int
    delay: dict
    delivered: dict
    drops: dict
    totals: dict
    energy_by_state_ns: dict
    port_state_ns: list
    total_energy: float
    normalized_energy: float
    mean_active_ports: float
    epoch_loads: list
    flow_delays: dict = field(default_factory=dict)
    departures: dict | None = None
    drop_seqs: set | None = None
    delay_log: list | None = None

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "n_ports": self.n_ports,
            "duration_ns": self.duration_ns,
            "warmup_ns": self.warmup_ns,
            "sampling_period_ns": self.sampling_period_ns,
            "delay_us": self.delay,
            "delivered": self.delivered,
            "drops": self.drops,
            "totals": self.totals,
            "energy_by_state_ns": self.energy_by_state_ns,
            "port_state_ns": self.port_state_ns,
            "total_energy": self.total_energy,
            "normalized_energy": self.normalized_energy,
            "mean_active_ports": self.mean_active_ports,
            "flow_delays_us": self.flow_delays,
            "epoch_loads": [
                {"epoch_ns": t, "active_ports": k, "port_loads_bps": loads}
                for t, k, loads in self.epoch_loads
            ],
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_json_dict(), indent=indent, sort_keys=True)

    def epoch_loads_csv(self) -> str:
        header = ["epoch_ns", "active_ports"] + [
            f"load_bps_port{i}" for i in range(self.n_ports)
        ]
        lines = [",".join(header)]
        for t, k, loads in self.epoch_loads:
            lines.append(",".join([str(t), str(k)] + [f"{x:.6f}" for x in loads]))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        rows = [
            ("algorithm", self.algorithm),
            ("ports", str(self.n_ports)),
            ("measured window", f"{(self.duration_ns - self.warmup_ns) / 1e9:.6f} s"),
            ("normalized energy", f"{self.normalized_energy:.6f}"),
            ("mean active ports", f"{self.mean_active_ports:.4f}"),
            ("drops normal / low-latency",
             f"{self.drops['normal']} / {self.drops['low_latency']}"),
        ]
        for name in ("overall", "normal", "low_latency"):
            stats = self.delay.get(name)
            if stats is None:
                rows.append((f"delay {name}", "no packets"))
            else:
                rows.append(
                    (f"delay {name} (us)",
                     f"mean {stats['mean_us']:.3f}  median {stats['median_us']:.3f}"
                     f"  p99 {stats['p99_us']:.3f}  n={stats['count']}")
                )
        for flow in sorted(self.flow_delays):
            stats = self.flow_delays[flow]
            if stats is None:
                rows.append((f"flow {flow}", "no packets"))
            else:
                rows.append(
                    (f"flow {flow} delay (us)",
                     f"mean {stats['mean_us']:.3f}  n={stats['count']}")
                )
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"


def run(config: SimConfig, stream) -> MetricsReport:
    """Simulate one packet stream through the bundle.

    Fires a control epoch every sampling period (t = T, 2T, ...), dispatches
    each arrival per the incumbent plan, and returns metrics measured over
    [warmup, duration). Packets still queued at the end are counted in the
    conservation totals but contribute no delay sample.
    """
    config.validate()
    n_ports = config.bundle.n_ports
    duration = config.duration_ns
    warmup = config.resolved_warmup()
    period = config.sampling_period_ns

    ports = [
        EeePort(i, config.port, (warmup, duration), config.record_transitions)
        for i in range(n_ports)
    ]
    table = FlowTable(config)
    classes = table.classes

    heap: list = []
    push = heapq.heappush
    pop = heapq.heappop
    nev = 0

    arrivals = iter(stream)
    first = next(arrivals, None)
    if first is not None:
        push(heap, (first.arrival_time, _RANK_ARRIVAL, 0, nev, first))
        nev += 1
    if period < duration:
        push(heap, (period, _RANK_EPOCH, 0, nev, None))
        nev += 1

    delays = {TrafficClass.NORMAL: [], TrafficClass.LOW_LATENCY: []}
    drops_w = {TrafficClass.NORMAL: 0, TrafficClass.LOW_LATENCY: 0}
    delivered_w = {TrafficClass.NORMAL: 0, TrafficClass.LOW_LATENCY: 0}
    arrived_total = delivered_total = dropped_total = 0
    departures = {} if config.record_departures else None
    drop_seqs = set() if config.record_departures else None
    delay_log = [] if config.record_delay_log else None
    tracked = {flow: [] for flow in config.track_flows}
    epoch_rows: list = []

    # Time-weighted incumbent-plan width ("ports the algorithm is using").
    ap_acc = 0
    ap_last = 0
    ap_k = table.plan.active_ports
    last_arrival = -1

    while heap:
        t, rank, key, _, payload = pop(heap)
        if t >= duration:
            break
        if rank == 1:  # arrival
            pkt = payload
            if pkt.arrival_time < last_arrival:
                raise SimulationFault(
                    f"arrival stream not time-ordered at t={pkt.arrival_time}"
                )
            last_arrival = pkt.arrival_time
            arrived_total += 1
            port_idx, queue = table.dispatch(pkt)
            cls = classes[pkt.flow]
            accepted, events = ports[port_idx].enqueue(pkt, queue, cls, t)
            if accepted:
                for kind, te in events:
                    push(heap, (te, _RANK[kind], port_idx, nev, None))
                    nev += 1
            else:
                dropped_total += 1
                if t >= warmup:
                    drops_w[cls] += 1
                if drop_seqs is not None:
                    drop_seqs.add(pkt.seq)
            nxt = next(arrivals, None)
            if nxt is not None:
                push(heap, (nxt.arrival_time, _RANK_ARRIVAL, 0, nev, nxt))
                nev += 1
        elif rank == 2:  # transmission complete
            (pkt, cls, delay, started), events = ports[key].on_tx_complete(t)
            delivered_total += 1
            if pkt.arrival_time >= warmup:
                delays[cls].append(delay)
                delivered_w[cls] += 1
                if pkt.flow in tracked:
                    tracked[pkt.flow].append(delay)
                if delay_log is not None:
                    delay_log.append(
                        (pkt.flow, pkt.arrival_time, delay, started, pkt.size)
                    )
            if departures is not None:
                departures[pkt.seq] = t
            for kind, te in events:
                push(heap, (te, _RANK[kind], key, nev, None))
                nev += 1
        elif rank == 0:  # control epoch
            lo = ap_last if ap_last > warmup else warmup
            if t > lo:
                ap_acc += ap_k * (t - lo)
            ap_last = t
            plan = table.control_epoch(t)
            ap_k = plan.active_ports
            epoch_rows.append(
                (t, plan.active_ports, [float(x) for x in plan.port_loads])
            )
            nt = t + period
            if nt < duration:
                push(heap, (nt, _RANK_EPOCH, 0, nev, None))
                nev += 1
        elif rank == 3:
            for kind, te in ports[key].on_sleep_complete(t):
                push(heap, (te, _RANK[kind], key, nev, None))
                nev += 1
        else:
            for kind, te in ports[key].on_wake_complete(t):
                push(heap, (te, _RANK[kind], key, nev, None))
                nev += 1

    for port in ports:
        port.finalize(duration)
    lo = ap_last if ap_last > warmup else warmup
    if duration > lo:
        ap_acc += ap_k * (duration - lo)

    measured_ns = duration - warmup
    by_state = {
        state.value: sum(p.residence_ns[state] for p in ports) for state in PortState
    }
    awake_ns = (
        by_state[PortState.ACTIVE.value]
        + by_state[PortState.SLEEP_TRANS.value]
        + by_state[PortState.WAKE_TRANS.value]
    )
    p_active, p_lpi = config.port.p_active, config.port.p_lpi
    total_energy = awake_ns * 1e-9 * p_active + by_state[PortState.LPI.value] * 1e-9 * p_lpi
    normalized = total_energy / (n_ports * p_active * measured_ns * 1e-9)

    queued_end = sum(p.occupancy for p in ports) + sum(
        1 for p in ports if p.tx_packet is not None
    )
    all_delays = delays[TrafficClass.NORMAL] + delays[TrafficClass.LOW_LATENCY]

    return MetricsReport(
        algorithm=config.bundle.algorithm.value,
        n_ports=n_ports,
        duration_ns=duration,
        warmup_ns=warmup,
        sampling_period_ns=period,
        delay={
            "normal": _delay_stats(delays[TrafficClass.NORMAL]),
            "low_latency": _delay_stats(delays[TrafficClass.LOW_LATENCY]),
            "overall": _delay_stats(all_delays),
        },
        delivered={
            "normal": delivered_w[TrafficClass.NORMAL],
            "low_latency": delivered_w[TrafficClass.LOW_LATENCY],
        },
        drops={
            "normal": drops_w[TrafficClass.NORMAL],
            "low_latency": drops_w[TrafficClass.LOW_LATENCY],
        },
        totals={
            "arrived": arrived_total,
            "delivered": delivered_total,
            "dropped": dropped_total,
            "queued_end": queued_end,
        },
        energy_by_state_ns=by_state,
        port_state_ns=[
            {state.value: p.residence_ns[state] for state in PortState} for p in ports
        ],
        total_energy=total_energy,
        normalized_energy=normalized,
        mean_active_ports=ap_acc / measured_ns,
        epoch_loads=epoch_rows,
        flow_delays={flow: _delay_stats(samples) for flow, samples in tracked.items()},
        departures=departures,
        drop_seqs=drop_seqs,
        delay_log=delay_log,
    )


def oracle_simulate(config: SimConfig, packets):
    """Per-packet departure times by direct chronological scan.

    Re-derives every departure with explicit per-port state variables and no
    event queue, as an independent cross-check of :func:`run`. The duration
    in ``config`` is ignored: every accepted packet is drained. Returns
    ``(departures, dropped)`` keyed by packet seq. Intended for small traces.
    """
    config.validate()
    pkts = list(packets)
    for a, b in zip(pkts, pkts[1:]):
        if b.arrival_time < a.arrival_time:
            raise SimulationFault("arrival stream not time-ordered")

    table = FlowTable(config)
    cfg = config.port
    t_sleep, t_wake = cfg.t_sleep_ns, cfg.t_wake_ns
    limit = cfg.buffer_limit
    tx_time = cfg.tx_time_ns

    ACTIVE, LPI, SLEEP, WAKE = 0, 1, 2, 3
    ports = [
        {"state": LPI, "until": 0, "high": deque(), "low": deque(), "tx_seq": -1, "tx_end": 0}
        for _ in range(config.bundle.n_ports)
    ]
    departures: dict = {}
    dropped: set = set()

    def advance(p, horizon):
        # Completions at exactly `horizon` wait until after that instant's
        # arrivals, mirroring the event-loop tie-break.
        while True:
            state = p["state"]
            if state == ACTIVE:
                end = p["tx_end"]
                if end >= horizon:
                    return
                departures[p["tx_seq"]] = end
                if p["high"]:
                    seq, size = p["high"].popleft()
                elif p["low"]:
                    seq, size = p["low"].popleft()
                else:
                    p["state"] = SLEEP
                    p["until"] = end + t_sleep
                    continue
                p["tx_seq"] = seq
                p["tx_end"] = end + tx_time(size)
            elif state == SLEEP:
                until = p["until"]
                if until >= horizon:
                    return
                if p["high"] or p["low"]:
                    p["state"] = WAKE
                    p["until"] = until + t_wake
                else:
                    p["state"] = LPI
            elif state == WAKE:
                until = p["until"]
                if until >= horizon:
                    return
                if p["high"]:
                    seq, size = p["high"].popleft()
                elif p["low"]:
                    seq, size = p["low"].popleft()
                else:
                    raise SimulationFault("oracle: wake completed with empty queues")
                p["state"] = ACTIVE
                p["tx_seq"] = seq
                p["tx_end"] = until + tx_time(size)
            else:  # LPI: nothing happens until an arrival
                return

    period = config.sampling_period_ns
    next_epoch = period
    for pkt in pkts:
        t = pkt.arrival_time
        while next_epoch <= t:  # epochs run before same-instant arrivals
            for p in ports:
                advance(p, next_epoch)
            table.control_epoch(next_epoch)
            next_epoch += period
        for p in ports:
            advance(p, t)
        idx, queue = table.dispatch(pkt)
        p = ports[idx]
        if len(p["high"]) + len(p["low"]) >= limit:
            dropped.add(pkt.seq)
            continue
        (p["high"] if queue is Queue.HIGH else p["low"]).append((pkt.seq, pkt.size))
        if p["state"] == LPI:
            p["state"] = WAKE
            p["until"] = t + t_wake
    for p in ports:
        advance(p, _INF)
    return departures, dropped
