"""One IEEE 802.3az port: sleep/wake state machine, dual priority queues.

The port is a single-owner state machine: only the engine's event loop (or
the test oracle) mutates it, so there is no locking. State changes happen at
integer-nanosecond instants and every transition is accounted so that state
residence times over any window sum to the window length.

State machine rules:

* ``ACTIVE``  - a frame is on the wire. Transmission is non-preemptive and
  lasts exactly ``size*8/capacity`` (rounded to integer ns).
* ``LPI``     - low power idle. A new arrival starts a wake transition.
* ``SLEEP_TRANS`` - entered immediately when a transmission ends with both
  queues empty. The transition cannot be aborted: an arrival during it marks
  a pending wake that starts only when the sleep transition completes.
* ``WAKE_TRANS``  - after it completes the port starts transmitting.

Strict priority: when a transmission ends the next frame comes from the low
queue only if the high queue is empty. Both queues share one buffer of
``buffer_limit`` packets with tail drop.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum, IntEnum

from .errors import ConfigError, SimulationFault
from .traffic import TrafficClass


class PortState(Enum):
    ACTIVE = "active"
    LPI = "lpi"
    SLEEP_TRANS = "sleep_trans"
    WAKE_TRANS = "wake_trans"


class Queue(IntEnum):
    HIGH = 0
    LOW = 1


class PortEvent(IntEnum):
    """Follow-up events a port asks the engine to schedule."""

    TX_COMPLETE = 0
    SLEEP_COMPLETE = 1
    WAKE_COMPLETE = 2


@dataclass(slots=True)
class EeePortConfig:
    """Physical parameters of one EEE port.

    Powers are normalized: the transition states draw the same power as
    ACTIVE, which is the common modelling assumption when the measured
    energy profile of the PHY is not available.
    """

    capacity_bps: int
    t_sleep_ns: int = 2280   # 10GBASE-T sleep transition
    t_wake_ns: int = 4480    # 10GBASE-T wake transition
    buffer_limit: int = 10000
    p_active: float = 1.0
    p_lpi: float = 0.1

    def validate(self) -> None:
        if self.capacity_bps <= 0:
            raise ConfigError(f"capacity must be positive, got {self.capacity_bps}")
        if self.t_sleep_ns < 0 or self.t_wake_ns < 0:
            raise ConfigError("transition times must be non-negative")
        if self.buffer_limit < 1:
            raise ConfigError(f"buffer limit must be >= 1, got {self.buffer_limit}")
        if not 0 <= self.p_lpi <= self.p_active:
            raise ConfigError("power levels must satisfy 0 <= p_lpi <= p_active")

    def tx_time_ns(self, size_bytes: int) -> int:
        """Wire time of a frame, rounded to the nearest nanosecond."""
        num = size_bytes * 8 * 10**9
        return (2 * num + self.capacity_bps) // (2 * self.capacity_bps)


class EeePort:
    """State machine, queues and accounting for a single port."""

    __slots__ = (
        "index", "cfg", "state", "state_since", "trans_end",
        "high", "low", "tx_packet", "tx_class", "tx_start", "tx_end",
        "clock", "residence_ns", "drops", "delivered",
        "win_start", "win_end", "transitions",
    )

    def __init__(self, index: int, cfg: EeePortConfig, window=(0, None),
                 record_transitions: bool = False):
        cfg.validate()
        self.index = index
        self.cfg = cfg
        self.state = PortState.LPI          # ports start cold, in LPI
        self.state_since = 0
        self.trans_end = 0
        self.high: deque = deque()
        self.low: deque = deque()
        self.tx_packet = None
        self.tx_class = None
        self.tx_start = 0
        self.tx_end = 0
        self.clock = 0
        self.residence_ns = {s: 0 for s in PortState}
        self.drops = {TrafficClass.NORMAL: 0, TrafficClass.LOW_LATENCY: 0}
        self.delivered = {TrafficClass.NORMAL: 0, TrafficClass.LOW_LATENCY: 0}
        self.win_start, self.win_end = window
        self.transitions = [] if record_transitions else None

    @property
    def occupancy(self) -> int:
        return len(self.high) + len(self.low)

    def _accrue(self, now: int) -> None:
        lo = self.state_since if self.state_since > self.win_start else self.win_start
        hi = now if self.win_end is None or now < self.win_end else self.win_end
        if hi > lo:
            self.residence_ns[self.state] += hi - lo

    def _set_state(self, new: PortState, now: int) -> None:
        if new is self.state:
            return
        self._accrue(now)
        if self.transitions is not None:
            self.transitions.append((now, self.state, new))
        self.state = new
        self.state_since = now

    def _start_tx(self, pkt, cls, now: int):
        self._set_state(PortState.ACTIVE, now)
        self.tx_packet = pkt
        self.tx_class = cls
        self.tx_start = now
        self.tx_end = now + self.cfg.tx_time_ns(pkt.size)
        return (PortEvent.TX_COMPLETE, self.tx_end)

    def enqueue(self, pkt, queue: Queue, cls: TrafficClass, now: int):
        """Accept or tail-drop an arriving frame.

        Returns ``(accepted, events)`` where ``events`` are follow-ups to
        schedule. A frame arriving to an LPI port triggers the wake
        transition; during SLEEP_TRANS the wake is deferred until the sleep
        transition completes (non-empty queues mark the pending wake).
        """
        if now < self.clock:
            raise SimulationFault(
                f"port {self.index}: time went backwards ({now} < {self.clock})"
            )
        self.clock = now
        if self.occupancy >= self.cfg.buffer_limit:
            self.drops[cls] += 1
            return False, ()
        (self.high if queue is Queue.HIGH else self.low).append((pkt, cls))
        state = self.state
        if state is PortState.LPI:
            self._set_state(PortState.WAKE_TRANS, now)
            self.trans_end = now + self.cfg.t_wake_ns
            return True, ((PortEvent.WAKE_COMPLETE, self.trans_end),)
        if state is PortState.ACTIVE and self.tx_packet is None:
            # Unreachable through the engine (ACTIVE always transmits) but
            # kept so direct use of the port stays work-conserving.
            nxt = self.high.popleft() if self.high else self.low.popleft()
            return True, (self._start_tx(nxt[0], nxt[1], now),)
        # SLEEP_TRANS: queue occupancy marks the pending wake.
        # WAKE_TRANS / ACTIVE with a frame in flight: nothing to schedule.
        return True, ()

    def on_tx_complete(self, now: int):
        """Finish the frame in flight and pick the next action.

        Returns ``((packet, class, delay, tx_start), events)``.
        """
        if self.tx_packet is None or self.tx_end != now:
            raise SimulationFault(
                f"port {self.index}: tx completion at {now} without matching transmission"
            )
        pkt, cls, started = self.tx_packet, self.tx_class, self.tx_start
        self.tx_packet = None
        self.tx_class = None
        self.delivered[cls] += 1
        self.clock = now
        delay = now - pkt.arrival_time
        if self.high:
            nxt = self.high.popleft()
        elif self.low:
            nxt = self.low.popleft()
        else:
            self._set_state(PortState.SLEEP_TRANS, now)
            self.trans_end = now + self.cfg.t_sleep_ns
            return (pkt, cls, delay, started), ((PortEvent.SLEEP_COMPLETE, self.trans_end),)
        return (pkt, cls, delay, started), (self._start_tx(nxt[0], nxt[1], now),)

    def on_sleep_complete(self, now: int):
        if self.state is not PortState.SLEEP_TRANS or self.trans_end != now:
            raise SimulationFault(
                f"port {self.index}: sleep completion at {now} in state {self.state}"
            )
        self.clock = now
        if self.occupancy:
            # One wake serves however many arrivals queued up meanwhile.
            self._set_state(PortState.WAKE_TRANS, now)
            self.trans_end = now + self.cfg.t_wake_ns
            return ((PortEvent.WAKE_COMPLETE, self.trans_end),)
        self._set_state(PortState.LPI, now)
        return ()

    def on_wake_complete(self, now: int):
        if self.state is not PortState.WAKE_TRANS or self.trans_end != now:
            raise SimulationFault(
                f"port {self.index}: wake completion at {now} in state {self.state}"
            )
        self.clock = now
        if self.high:
            nxt = self.high.popleft()
        elif self.low:
            nxt = self.low.popleft()
        else:
            raise SimulationFault(
                f"port {self.index}: woke at {now} with both queues empty"
            )
        return (self._start_tx(nxt[0], nxt[1], now),)

    def finalize(self, end: int) -> None:
        """Close the accounting at the end of the measured run."""
        self._accrue(end)
        self.state_since = end

    def energy(self) -> float:
        """Accumulated energy (normalized power x seconds) over the window."""
        r = self.residence_ns
        awake_ns = (
            r[PortState.ACTIVE] + r[PortState.SLEEP_TRANS] + r[PortState.WAKE_TRANS]
        )
        return awake_ns * 1e-9 * self.cfg.p_active + r[PortState.LPI] * 1e-9 * self.cfg.p_lpi
