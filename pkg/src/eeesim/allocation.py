"""Per-flow rate estimation and the flow -> (port, queue) allocation algorithms.

All allocators are pure functions from rate estimates to a plan. Rates and
port loads are kept as exact fractions so that port-count thresholds and
load tie-breaks never depend on floating-point rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .eee_port import Queue
from .errors import ConfigError
from .traffic import TrafficClass


class Algorithm(Enum):
    EQUITABLE = "equitable"
    GREEDY = "greedy"
    BOUNDED_GREEDY = "bounded_greedy"
    CONSERVATIVE = "conservative"
    SPARE_PORT = "spare_port"
    TWO_QUEUES = "two_queues"


@dataclass(slots=True)
class BundleConfig:
    n_ports: int
    capacity_bps: int
    algorithm: Algorithm = Algorithm.CONSERVATIVE
    bound_fraction: float = 0.9  # bounded-greedy per-port fill threshold

    def validate(self) -> None:
        if self.n_ports < 1:
            raise ConfigError(f"bundle needs at least one port, got {self.n_ports}")
        if self.capacity_bps <= 0:
            raise ConfigError(f"port capacity must be positive, got {self.capacity_bps}")
        if not 0 < self.bound_fraction <= 1:
            raise ConfigError(
                f"bound fraction must be in (0, 1], got {self.bound_fraction}"
            )


@dataclass(slots=True)
class FlowEstimate:
    """Rate a flow is expected to carry in the next interval."""

    flow: str
    bytes_last_period: int
    rate: Fraction  # bits/s, exactly bytes*8/period
    traffic_class: TrafficClass


@dataclass
class AllocationPlan:
    """Flow -> (port, queue) mapping installed at a control epoch.

    ``port_loads`` are the planned per-port loads (estimate sums) used to
    place flows that show up before the next epoch; ``active_set`` is where
    such unplanned normal flows may go, and ``spare_port`` is where the
    spare-port algorithm concentrates low-latency traffic.
    """

    assignments: dict = field(default_factory=dict)  # flow -> (port, Queue)
    active_ports: int = 1
    epoch: int = 0
    algorithm: Algorithm = Algorithm.CONSERVATIVE
    port_loads: list = field(default_factory=list)   # Fraction per port
    active_set: tuple = (0,)
    spare_port: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "epoch_ns": self.epoch,
            "algorithm": self.algorithm.value,
            "active_ports": self.active_ports,
            "spare_port": self.spare_port,
            "port_loads_bps": [float(x) for x in self.port_loads],
            "assignments": {
                flow: {"port": port, "queue": queue.name.lower()}
                for flow, (port, queue) in sorted(self.assignments.items())
            },
        }


def initial_plan(algorithm: Algorithm, n_ports: int) -> AllocationPlan:
    """Plan in force before the first control epoch: port 0 only, no flows."""
    return AllocationPlan(
        assignments={},
        active_ports=1,
        epoch=0,
        algorithm=algorithm,
        port_loads=[Fraction(0)] * n_ports,
        active_set=(0,),
        spare_port=None,
    )


def estimate_rates(byte_counts, period_ns, classes, retained=()) -> list[FlowEstimate]:
    """One estimate per flow, rate = bytes*8/period.

    Flows absent from ``byte_counts`` but listed in ``retained`` (the
    previous plan) are kept with rate 0. Output is sorted by flow id.
    """
    if period_ns <= 0:
        raise ConfigError(f"estimation period must be positive, got {period_ns}")
    flows = set(byte_counts) | set(retained)
    out = []
    for flow in sorted(flows):
        nbytes = byte_counts.get(flow, 0)
        out.append(
            FlowEstimate(
                flow=flow,
                bytes_last_period=nbytes,
                rate=Fraction(nbytes * 8 * 10**9, period_ns),
                traffic_class=classes.get(flow, TrafficClass.NORMAL),
            )
        )
    return out


def required_ports(total_rate, capacity_bps, n_ports: int) -> int:
    """Minimum number of ports for the load: clamp(ceil(total/capacity), 1, N)."""
    if capacity_bps <= 0:
        raise ConfigError(f"capacity must be positive, got {capacity_bps}")
    k = math.ceil(Fraction(total_rate) / capacity_bps)
    return min(n_ports, max(1, k))


def _by_rate_desc(estimates):
    # Equal-rate flows order by flow id so replays are deterministic.
    return sorted(estimates, key=lambda e: (-e.rate, e.flow))


def _lpt(estimates, ports, n_ports):
    """Longest-processing-time-first balancing over the given ports.

    Ties go to the lower port index. Returns (flow -> port, loads[n_ports]).
    """
    loads = [Fraction(0)] * n_ports
    placement = {}
    for est in _by_rate_desc(estimates):
        port = min(ports, key=lambda i: (loads[i], i))
        placement[est.flow] = port
        loads[port] += est.rate
    return placement, loads


def conservative_allocate(estimates, k: int, n_ports: int, epoch: int = 0) -> AllocationPlan:
    """Balance all flows over the first k ports, keep the rest idle."""
    if not 1 <= k <= n_ports:
        raise ConfigError(f"k={k} outside [1, {n_ports}]")
    placement, loads = _lpt(estimates, range(k), n_ports)
    return AllocationPlan(
        assignments={f: (p, Queue.LOW) for f, p in placement.items()},
        active_ports=k,
        epoch=epoch,
        algorithm=Algorithm.CONSERVATIVE,
        port_loads=loads,
        active_set=tuple(range(k)),
    )


def equitable_allocate(estimates, n_ports: int, epoch: int = 0) -> AllocationPlan:
    """Spread flows over all N ports regardless of load."""
    plan = conservative_allocate(estimates, n_ports, n_ports, epoch)
    plan.algorithm = Algorithm.EQUITABLE
    return plan


def _first_fit(estimates, threshold, n_ports):
    loads = [Fraction(0)] * n_ports
    placement = {}
    for est in _by_rate_desc(estimates):
        port = None
        for i in range(n_ports):
            if loads[i] + est.rate <= threshold:
                port = i
                break
        if port is None:
            # Flow does not fit anywhere: fall back to the least-loaded port.
            port = min(range(n_ports), key=lambda i: (loads[i], i))
        placement[est.flow] = port
        loads[port] += est.rate
    return placement, loads


def _greedy_plan(estimates, threshold, n_ports, epoch, algorithm):
    placement, loads = _first_fit(estimates, threshold, n_ports)
    used = sorted(set(placement.values())) or [0]
    return AllocationPlan(
        assignments={f: (p, Queue.LOW) for f, p in placement.items()},
        active_ports=len(used),
        epoch=epoch,
        algorithm=algorithm,
        port_loads=loads,
        active_set=tuple(used),
    )


def greedy_allocate(estimates, capacity_bps, n_ports: int, epoch: int = 0) -> AllocationPlan:
    """First-fit decreasing onto the lowest-index port with room up to capacity."""
    return _greedy_plan(estimates, Fraction(capacity_bps), n_ports, epoch, Algorithm.GREEDY)


def bounded_greedy_allocate(
    estimates, capacity_bps, bound_fraction, n_ports: int, epoch: int = 0
) -> AllocationPlan:
    """Greedy with the per-port threshold lowered to bound_fraction * capacity."""
    if not 0 < bound_fraction <= 1:
        raise ConfigError(f"bound fraction must be in (0, 1], got {bound_fraction}")
    if isinstance(bound_fraction, float):
        bound_fraction = Fraction(str(bound_fraction))
    threshold = Fraction(bound_fraction) * capacity_bps
    return _greedy_plan(estimates, threshold, n_ports, epoch, Algorithm.BOUNDED_GREEDY)


def spare_port_allocate(estimates, capacity_bps, n_ports: int, epoch: int = 0) -> AllocationPlan:
    """Conservative on normal flows, low-latency flows onto the emptiest port.

    Pass 1 sizes the active set from normal traffic only. Pass 2 sends every
    low-latency flow to the port with the smallest pass-1 load, breaking ties
    toward the highest index so an untouched trailing port is preferred.
    """
    normal = [e for e in estimates if e.traffic_class is TrafficClass.NORMAL]
    lowlat = [e for e in estimates if e.traffic_class is TrafficClass.LOW_LATENCY]
    total = sum((e.rate for e in normal), Fraction(0))
    k = required_ports(total, capacity_bps, n_ports)
    placement, loads = _lpt(normal, range(k), n_ports)
    assignments = {f: (p, Queue.LOW) for f, p in placement.items()}
    spare = None
    if lowlat:
        spare = min(range(n_ports), key=lambda i: (loads[i], -i))
        for est in _by_rate_desc(lowlat):
            assignments[est.flow] = (spare, Queue.LOW)
            loads[spare] += est.rate
    active = k + (1 if spare is not None and spare >= k else 0)
    return AllocationPlan(
        assignments=assignments,
        active_ports=active,
        epoch=epoch,
        algorithm=Algorithm.SPARE_PORT,
        port_loads=loads,
        active_set=tuple(range(k)),
        spare_port=spare,
    )


def two_queues_allocate(estimates, capacity_bps, n_ports: int, epoch: int = 0) -> AllocationPlan:
    """Conservative port placement, class-based queue selection.

    The flow -> port map is bit-for-bit the conservative one computed over
    all flows; only the queue differs (high for low-latency flows).
    """
    total = sum((e.rate for e in estimates), Fraction(0))
    k = required_ports(total, capacity_bps, n_ports)
    plan = conservative_allocate(estimates, k, n_ports, epoch)
    cls = {e.flow: e.traffic_class for e in estimates}
    plan.assignments = {
        f: (p, Queue.HIGH if cls[f] is TrafficClass.LOW_LATENCY else Queue.LOW)
        for f, (p, _) in plan.assignments.items()
    }
    plan.algorithm = Algorithm.TWO_QUEUES
    return plan


def allocate(algorithm: Algorithm, estimates, bundle: BundleConfig, epoch: int = 0) -> AllocationPlan:
    """Run the configured allocator over the estimates."""
    n, cap = bundle.n_ports, bundle.capacity_bps
    if algorithm is Algorithm.EQUITABLE:
        return equitable_allocate(estimates, n, epoch)
    if algorithm is Algorithm.GREEDY:
        return greedy_allocate(estimates, cap, n, epoch)
    if algorithm is Algorithm.BOUNDED_GREEDY:
        return bounded_greedy_allocate(estimates, cap, bundle.bound_fraction, n, epoch)
    if algorithm is Algorithm.CONSERVATIVE:
        total = sum((e.rate for e in estimates), Fraction(0))
        return conservative_allocate(estimates, required_ports(total, cap, n), n, epoch)
    if algorithm is Algorithm.SPARE_PORT:
        return spare_port_allocate(estimates, cap, n, epoch)
    if algorithm is Algorithm.TWO_QUEUES:
        return two_queues_allocate(estimates, cap, n, epoch)
    raise ConfigError(f"unknown algorithm {algorithm!r}")
