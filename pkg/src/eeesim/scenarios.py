"""Experiment scenarios: synthetic traffic builders, sweeps, report files.

A scenario is a JSON-friendly description of one experiment: the bundle and
port parameters, a list of traffic sources, the algorithms to compare and an
optional sweep axis (low-latency rates or normal-traffic rates). Running a
scenario produces one simulation per (algorithm x sweep point), a JSON
report per run and a combined CSV.

Synthetic traffic comes in three flavors, all built from the same exact
integer arithmetic as the CBR generator:

* ``cbr``    - equal packets at a constant pace.
* ``frames`` - short line-rate packet trains at a constant frame pace, the
  shape of real-time multimedia; degenerates to plain CBR at low rates.
* ``bursty`` - an exact per-sampling-window packet budget laid out as
  line-rate bursts with deterministic jitter, standing in for the burstiness
  of captured backbone traffic.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .allocation import Algorithm, BundleConfig
from .eee_port import EeePortConfig
from .engine import MetricsReport, SimConfig, run
from .errors import ConfigError
from .traffic import Packet, gen_cbr, merge, read_trace, scale_trace
from .traffic import _check_dscp, _check_size

#: packets per frame grow with the rate so the frame pace stays well below
#: the sleep/wake time scale (one packet per frame up to 100 Mb/s).
FRAME_UNIT_BPS = 100_000_000

_SIM_DEFAULTS = {
    "n_ports": 5,
    "capacity_bps": 10_000_000_000,
    "t_sleep_ns": 2280,
    "t_wake_ns": 4480,
    "buffer_limit": 10000,
    "p_active": 1.0,
    "p_lpi": 0.1,
    "bound_fraction": 0.9,
    "sampling_period_ns": 500_000_000,
    "warmup_ns": None,
    "duration_ns": 1_000_000_000,
    "ll_dscps": [46],
    "track_flows": [],
}


@dataclass
class Scenario:
    """One experiment: traffic, bundle parameters and sweep axes."""

    name: str
    sim: dict
    sources: list
    algorithms: list
    ll_source: dict | None = None
    ll_rates_bps: list = field(default_factory=list)
    normal_rates_bps: list = field(default_factory=list)
    output_dir: str | None = None

    def validate(self) -> None:
        if not self.sources and self.ll_source is None:
            raise ConfigError(f"scenario {self.name!r} has no traffic sources")
        if not self.algorithms:
            raise ConfigError(f"scenario {self.name!r} lists no algorithms")
        for alg in self.algorithms:
            Algorithm(alg)
        if self.ll_rates_bps and self.ll_source is None:
            raise ConfigError("ll_rates_bps sweep needs an ll_source template")
        if self.ll_rates_bps and self.normal_rates_bps:
            raise ConfigError("only one sweep axis is supported per scenario")
        for src in list(self.sources) + ([self.ll_source] if self.ll_source else []):
            kind = src.get("kind")
            if kind not in ("cbr", "frames", "bursty", "trace"):
                raise ConfigError(f"unknown source kind {kind!r}")
        unknown = set(self.sim) - set(_SIM_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown sim fields: {sorted(unknown)}")

    def sim_value(self, key):
        return self.sim.get(key, _SIM_DEFAULTS[key])

    def base_normal_rate_bps(self) -> int:
        return sum(int(src.get("rate_bps", 0)) for src in self.sources)

    def sweep_points(self) -> list:
        base = self.base_normal_rate_bps()
        if self.ll_rates_bps:
            return [
                {"ll_rate_bps": int(r), "normal_rate_bps": base}
                for r in self.ll_rates_bps
            ]
        if self.normal_rates_bps:
            return [
                {"ll_rate_bps": 0, "normal_rate_bps": int(r)}
                for r in self.normal_rates_bps
            ]
        ll = int(self.ll_source["rate_bps"]) if self.ll_source else 0
        return [{"ll_rate_bps": ll, "normal_rate_bps": base}]

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "sim": self.sim,
            "sources": self.sources,
            "algorithms": self.algorithms,
            "ll_source": self.ll_source,
            "ll_rates_bps": self.ll_rates_bps,
            "normal_rates_bps": self.normal_rates_bps,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        known = {"name", "sim", "sources", "algorithms", "ll_source",
                 "ll_rates_bps", "normal_rates_bps", "output_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        try:
            scenario = cls(
                name=data["name"],
                sim=dict(data.get("sim", {})),
                sources=list(data.get("sources", [])),
                algorithms=list(data.get("algorithms", [])),
                ll_source=data.get("ll_source"),
                ll_rates_bps=list(data.get("ll_rates_bps", [])),
                normal_rates_bps=list(data.get("normal_rates_bps", [])),
                output_dir=data.get("output_dir"),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario is missing field {exc}") from None
        scenario.validate()
        return scenario


def build_sim_config(scenario: Scenario, algorithm) -> SimConfig:
    sv = scenario.sim_value
    return SimConfig(
        bundle=BundleConfig(
            n_ports=int(sv("n_ports")),
            capacity_bps=int(sv("capacity_bps")),
            algorithm=Algorithm(algorithm),
            bound_fraction=float(sv("bound_fraction")),
        ),
        port=EeePortConfig(
            capacity_bps=int(sv("capacity_bps")),
            t_sleep_ns=int(sv("t_sleep_ns")),
            t_wake_ns=int(sv("t_wake_ns")),
            buffer_limit=int(sv("buffer_limit")),
            p_active=float(sv("p_active")),
            p_lpi=float(sv("p_lpi")),
        ),
        duration_ns=int(sv("duration_ns")),
        sampling_period_ns=int(sv("sampling_period_ns")),
        ll_dscps=frozenset(int(d) for d in sv("ll_dscps")),
        warmup_ns=sv("warmup_ns"),
        track_flows=frozenset(sv("track_flows")),
    )


def _round_div(num: int, den: int) -> int:
    return (2 * num + den) // (2 * den)


def gen_frames(rate_bps, pkt_size, dscp, duration_ns, line_rate_bps,
               start_offset_ns=0, flow="frames", pkts_per_frame=None):
    """Packet trains at line rate, paced so the mean rate is exact.

    Each frame carries ``pkts_per_frame`` back-to-back packets (spacing =
    wire time at ``line_rate_bps``); frames repeat so the long-run average
    equals ``rate_bps``. With one packet per frame this is plain CBR.
    """
    rate = int(rate_bps)
    if rate <= 0:
        raise ConfigError(f"rate must be positive, got {rate_bps}")
    if line_rate_bps < rate:
        raise ConfigError("line rate below mean rate")
    if start_offset_ns < 0:
        raise ConfigError(f"start offset must be non-negative, got {start_offset_ns}")
    _check_size(pkt_size)
    _check_dscp(dscp)
    m = pkts_per_frame or max(1, math.ceil(rate / FRAME_UNIT_BPS))
    bits = pkt_size * 8
    intra = _round_div(bits * 10**9, line_rate_bps)
    frame_bits_ns = m * bits * 10**9  # frame period = this / rate

    def gen():
        end = start_offset_ns + duration_ns
        seq = 0
        f = 0
        while True:
            start = start_offset_ns + _round_div(f * frame_bits_ns, rate)
            if start >= end:
                return
            for j in range(m):
                t = start + j * intra
                if t >= end:
                    return
                yield Packet(t, pkt_size, flow, dscp, seq)
                seq += 1
            f += 1

    return gen()


def gen_bursty(pkts_per_window, pkt_size, dscp, window_ns, bursts_per_window,
               line_rate_bps, duration_ns, flow="bursty"):
    """Line-rate bursts carrying an exact per-window packet budget.

    Every window of ``window_ns`` contains exactly ``pkts_per_window``
    packets split into ``bursts_per_window`` bursts whose start times are
    jittered deterministically (CRC of flow/window/burst), so rate estimates
    taken on the window grid are identical every period while arrival phases
    stay decorrelated between flows.
    """
    if pkts_per_window < 1:
        raise ConfigError("pkts_per_window must be >= 1")
    if bursts_per_window < 1:
        raise ConfigError("bursts_per_window must be >= 1")
    _check_size(pkt_size)
    _check_dscp(dscp)
    intra = _round_div(pkt_size * 8 * 10**9, line_rate_bps)
    slot = window_ns // bursts_per_window
    base_chunk, extra = divmod(pkts_per_window, bursts_per_window)
    if (base_chunk + (1 if extra else 0) - 1) * intra >= slot:
        raise ConfigError("burst does not fit its slot; lower pkts or raise bursts")

    def gen():
        seq = 0
        n_windows = -(-duration_ns // window_ns)
        for w in range(n_windows):
            base = w * window_ns
            for b in range(bursts_per_window):
                chunk = base_chunk + (1 if b < extra else 0)
                if chunk == 0:
                    continue
                span = (chunk - 1) * intra + 1
                room = slot - span
                jitter = (
                    zlib.crc32(f"{flow}|{w}|{b}".encode()) % room if room > 0 else 0
                )
                start = base + b * slot + jitter
                for j in range(chunk):
                    t = start + j * intra
                    if t >= duration_ns:
                        return
                    yield Packet(t, pkt_size, flow, dscp, seq)
                    seq += 1

    return gen()


def _materialize(src: dict, scenario: Scenario, scale_factor=1.0):
    duration = int(scenario.sim_value("duration_ns"))
    kind = src["kind"]
    if kind == "trace":
        stream = read_trace(src["path"])
        factor = float(src.get("scale", 1.0)) * scale_factor
        if factor != 1.0:
            stream = scale_trace(stream, factor)
        return stream
    size = int(src["size"])
    dscp = int(src["dscp"])
    flow = str(src["flow"])
    rate = int(round(int(src["rate_bps"]) * scale_factor))
    if kind == "cbr":
        return gen_cbr(rate, size, dscp, duration,
                       int(src.get("offset_ns", 0)), flow)
    if kind == "frames":
        return gen_frames(rate, size, dscp, duration,
                          int(src.get("line_rate_bps",
                                      scenario.sim_value("capacity_bps"))),
                          int(src.get("offset_ns", 0)), flow,
                          src.get("pkts_per_frame"))
    if kind == "bursty":
        window = int(scenario.sim_value("sampling_period_ns"))
        ppw = _round_div(rate * window, size * 8 * 10**9)
        if ppw < 1:
            raise ConfigError(f"source {flow!r}: rate too low for one packet per window")
        target = int(src.get("burst_pkts", 500))
        bursts = max(1, round(ppw / target))
        return gen_bursty(ppw, size, dscp, window, bursts,
                          int(src.get("line_rate_bps",
                                      scenario.sim_value("capacity_bps"))),
                          duration, flow)
    raise ConfigError(f"unknown source kind {kind!r}")


def build_stream(scenario: Scenario, point: dict):
    """Merged packet stream for one sweep point."""
    base = scenario.base_normal_rate_bps()
    factor = 1.0
    if scenario.normal_rates_bps:
        if base <= 0:
            raise ConfigError("normal-rate sweep needs sources with rate_bps")
        factor = point["normal_rate_bps"] / base
    streams = [_materialize(src, scenario, factor) for src in scenario.sources]
    if scenario.ll_source is not None and point.get("ll_rate_bps", 0) > 0:
        src = dict(scenario.ll_source)
        src["rate_bps"] = point["ll_rate_bps"]
        streams.append(_materialize(src, scenario))
    return merge(streams)


def run_point(scenario_dict: dict, algorithm: str, point: dict) -> MetricsReport:
    """Execute one (algorithm, sweep point) simulation. Picklable worker."""
    scenario = Scenario.from_dict(scenario_dict)
    config = build_sim_config(scenario, algorithm)
    return run(config, build_stream(scenario, point))


def _worker(args):
    return run_point(*args)


def default_threads() -> int:
    value = os.environ.get("EEESIM_THREADS", "").strip()
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"EEESIM_THREADS must be an integer, got {value!r}")
    return os.cpu_count() or 1


CSV_COLUMNS = (
    "algorithm", "ll_rate_bps", "normal_rate_bps", "mean_delay_normal_us",
    "mean_delay_ll_us", "normalized_energy", "drops_normal", "drops_ll",
    "mean_active_ports",
)


def _csv_row(algorithm: str, point: dict, report: MetricsReport) -> dict:
    def mean_of(cls):
        stats = report.delay[cls]
        return f"{stats['mean_us']:.6f}" if stats else "nan"

    return {
        "algorithm": algorithm,
        "ll_rate_bps": point["ll_rate_bps"],
        "normal_rate_bps": point["normal_rate_bps"],
        "mean_delay_normal_us": mean_of("normal"),
        "mean_delay_ll_us": mean_of("low_latency"),
        "normalized_energy": f"{report.normalized_energy:.9f}",
        "drops_normal": report.drops["normal"],
        "drops_ll": report.drops["low_latency"],
        "mean_active_ports": f"{report.mean_active_ports:.6f}",
    }


def run_sweep(scenario: Scenario, threads: int | None = None):
    """All (algorithm x sweep point) runs, in sweep order.

    Returns ``(jobs, reports)`` where ``jobs[i]`` is ``(algorithm, point)``
    and ``reports[i]`` the matching report. Worker-pool size comes from
    ``threads``, the EEESIM_THREADS environment variable, or the CPU count;
    result order is fixed by the sweep definition, not completion order.
    """
    scenario.validate()
    points = scenario.sweep_points()
    jobs = [(alg, point) for alg in scenario.algorithms for point in points]
    n_threads = default_threads() if threads is None else max(1, threads)
    sdict = scenario.to_json_dict()
    args = [(sdict, alg, point) for alg, point in jobs]
    if n_threads <= 1 or len(jobs) <= 1:
        reports = [_worker(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(n_threads, len(jobs))) as pool:
            reports = list(pool.map(_worker, args))
    return jobs, reports


def combined_csv(jobs, reports) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for (alg, point), report in zip(jobs, reports):
        writer.writerow(_csv_row(alg, point, report))
    return buf.getvalue()


def run_scenario(scenario: Scenario, output_dir=None, threads=None,
                 epoch_csv: bool = False):
    """Run a scenario and write its report files.

    Writes ``combined.csv`` plus one ``<algorithm>-ll<ra>-n<rb>.json`` per
    run (and optionally the per-epoch port-load CSV). Outputs are a pure
    function of the scenario, so re-running overwrites identical bytes.
    """
    out = Path(output_dir or scenario.output_dir or f"out/{scenario.name}")
    out.mkdir(parents=True, exist_ok=True)
    jobs, reports = run_sweep(scenario, threads)
    written = []
    for (alg, point), report in zip(jobs, reports):
        stem = f"{alg}-ll{point['ll_rate_bps']}-n{point['normal_rate_bps']}"
        path = out / f"{stem}.json"
        path.write_text(report.to_json() + "\n")
        written.append(path)
        if epoch_csv:
            epath = out / f"{stem}.epochs.csv"
            epath.write_text(report.epoch_loads_csv())
            written.append(epath)
    csv_path = out / "combined.csv"
    csv_path.write_text(combined_csv(jobs, reports))
    written.append(csv_path)
    return jobs, reports, written


# ---------------------------------------------------------------------------
# Built-in scenarios. Packet sizes stay at common wire values (1500 B bulk,
# 125 B real-time); durations are kept short because the port counts, delay
# bands and energy ratios settle within a few sampling periods.
# ---------------------------------------------------------------------------

def _normal_mix(total_bps, shares, size=1500, line_rate=10_000_000_000):
    """Bursty flows named n0..n{k-1} whose nominal rates follow ``shares``."""
    scale = total_bps / sum(shares)
    return [
        {
            "kind": "bursty",
            "flow": f"n{i}",
            "size": size,
            "dscp": 0,
            "rate_bps": int(round(share * scale)),
            "line_rate_bps": line_rate,
            "burst_pkts": 500,
        }
        for i, share in enumerate(shares)
    ]


def qos_sweep_scenario(name="fig3") -> Scenario:
    """Low-latency delay/energy comparison near 65% bundle load.

    Eight bursty bulk flows sum to ~32.5 Gb/s on 5x10G (four active ports
    under the conservative family); a real-time flow sweeps 1 Mb/s to
    1 Gb/s. The same runs serve the delay views (normal and low-latency)
    and the energy view.
    """
    return Scenario(
        name=name,
        sim={
            "n_ports": 5,
            "capacity_bps": 10_000_000_000,
            "sampling_period_ns": 50_000_000,
            "warmup_ns": 200_000_000,
            "duration_ns": 300_000_000,
        },
        sources=_normal_mix(32_500_000_000, [1] * 8),
        ll_source={
            "kind": "frames",
            "flow": "ll0",
            "size": 125,
            "dscp": 46,
            "line_rate_bps": 10_000_000_000,
        },
        algorithms=["conservative", "spare_port", "two_queues"],
        ll_rates_bps=[1_000_000, 10_000_000, 100_000_000, 1_000_000_000],
    )


def baseline_sweep_scenario(name="fig2") -> Scenario:
    """Delay of the energy-unaware baselines over five aggregate rates.

    A nine-flow bursty mix is scaled to 6.5 .. 32.5 Gb/s and pushed through
    the equitable, conservative, bounded-greedy and greedy allocators. The
    40 Gb/s instantaneous burst rate mirrors how compressing a line-rate
    capture multiplies its peak rates.
    """
    shares = [5.6, 4.3, 4.2, 3.9, 2.9, 2.3, 1.5, 0.8, 0.5]
    return Scenario(
        name=name,
        sim={
            "n_ports": 5,
            "capacity_bps": 10_000_000_000,
            "sampling_period_ns": 50_000_000,
            "warmup_ns": 200_000_000,
            "duration_ns": 300_000_000,
        },
        sources=_normal_mix(26_000_000_000, shares, line_rate=40_000_000_000),
        algorithms=["equitable", "conservative", "bounded_greedy", "greedy"],
        normal_rates_bps=[
            6_500_000_000, 13_000_000_000, 19_500_000_000,
            26_000_000_000, 32_500_000_000,
        ],
    )


def ordering_scenario(name="ordering") -> Scenario:
    """One bursty trace on which the four baselines separate cleanly.

    24 equal 0.95 Gb/s flows make the per-port loads a pure function of the
    algorithm (LPT balances at 7.6 Gb/s, bounded-greedy packs nine flows per
    port, greedy ten), so the qualitative delay ordering does not hinge on
    which particular flows share a port.
    """
    return Scenario(
        name=name,
        sim={
            "n_ports": 5,
            "capacity_bps": 10_000_000_000,
            "sampling_period_ns": 50_000_000,
            "warmup_ns": 200_000_000,
            "duration_ns": 300_000_000,
        },
        sources=_normal_mix(22_800_000_000, [1] * 24, line_rate=40_000_000_000),
        algorithms=["equitable", "conservative", "bounded_greedy", "greedy"],
    )


def mininet_scenario(name="testbed") -> Scenario:
    """Emulated-testbed analogue: 4x1G bundle, three bulk flows, two probes.

    Two 700 Mb/s paced flows and one ~600 Mb/s bursty flow (traffic
    generators pace in bursts, so the nominal 600 Mb/s lands a hair above
    the two-port boundary, as measured traffic always does) occupy three
    ports; two one-packet-per-second 64 B probes measure per-class delay,
    one marked low latency (DSCP 46) and one normal.
    """
    return Scenario(
        name=name,
        sim={
            "n_ports": 4,
            "capacity_bps": 1_000_000_000,
            "sampling_period_ns": 500_000_000,
            "warmup_ns": 1_500_000_000,
            "duration_ns": 8_500_000_000,
            "track_flows": ["probe-ll", "probe-norm"],
        },
        sources=[
            {"kind": "cbr", "flow": "bulk-a", "size": 1250, "dscp": 0,
             "rate_bps": 700_000_000, "offset_ns": 0},
            {"kind": "cbr", "flow": "bulk-b", "size": 1250, "dscp": 0,
             "rate_bps": 700_000_000, "offset_ns": 7143},
            {"kind": "bursty", "flow": "bulk-c", "size": 1500, "dscp": 0,
             "rate_bps": 600_024_000, "line_rate_bps": 10_000_000_000,
             "burst_pkts": 625},
            {"kind": "cbr", "flow": "probe-norm", "size": 64, "dscp": 0,
             "rate_bps": 512, "offset_ns": 250_000_000},
            {"kind": "cbr", "flow": "probe-ll", "size": 64, "dscp": 46,
             "rate_bps": 512, "offset_ns": 750_000_000},
        ],
        algorithms=["conservative", "spare_port", "two_queues"],
    )


_BUILTIN_BUILDERS = {
    "baseline-delay": baseline_sweep_scenario,
    "qos-sweep": qos_sweep_scenario,
    "ordering": ordering_scenario,
    "testbed": mininet_scenario,
    # short aliases; the delay, normal-delay and energy views all read from
    # the same QoS sweep, just different columns of its combined CSV
    "fig2": baseline_sweep_scenario,
    "fig3": qos_sweep_scenario,
    "fig4": qos_sweep_scenario,
    "fig5": qos_sweep_scenario,
    "mininet": mininet_scenario,
}


def builtin_scenarios() -> dict:
    return {name: builder(name) for name, builder in _BUILTIN_BUILDERS.items()}


def load_scenario(ref: str) -> Scenario:
    """Scenario by builtin name or JSON file path."""
    builtins = builtin_scenarios()
    if ref in builtins:
        return builtins[ref]
    path = Path(ref)
    if not path.exists():
        raise ConfigError(
            f"{ref!r} is neither a builtin scenario ({', '.join(sorted(builtins))}) "
            f"nor a scenario file"
        )
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{ref}: invalid JSON: {exc}") from None
    return Scenario.from_dict(data)
