"""Command-line experiment harness.

Subcommands: run, gen, scale, merge, mininet-scenario, report.
Exit codes: 0 success, 2 configuration error, 3 simulation fault.
EEESIM_THREADS overrides the sweep worker-pool size.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, SimulationFault, TraceError
from .scenarios import (
    Scenario,
    builtin_scenarios,
    load_scenario,
    run_scenario,
)
from .traffic import gen_cbr, merge, read_trace, scale_trace, write_trace

_RATE_SUFFIX = {"k": 10**3, "m": 10**6, "g": 10**9}
_TIME_SUFFIX = {"ns": 1, "us": 10**3, "ms": 10**6, "s": 10**9}


def parse_rate(text: str) -> int:
    """'100M' -> 100_000_000 bits per second."""
    raw = text.strip().lower().removesuffix("bps").removesuffix("b/s")
    mult = 1
    if raw and raw[-1] in _RATE_SUFFIX:
        mult = _RATE_SUFFIX[raw[-1]]
        raw = raw[:-1]
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse rate {text!r}") from None
    if value <= 0:
        raise ConfigError(f"rate must be positive, got {text!r}")
    return int(round(value * mult))


def parse_time(text: str) -> int:
    """'1s' / '500ms' / '250us' / '40ns' -> nanoseconds."""
    raw = text.strip().lower()
    for suffix in ("ns", "us", "ms", "s"):
        if raw.endswith(suffix):
            number = raw[: -len(suffix)]
            try:
                return int(round(float(number) * _TIME_SUFFIX[suffix]))
            except ValueError:
                raise ConfigError(f"cannot parse duration {text!r}") from None
    try:
        return int(raw)  # bare integers are nanoseconds
    except ValueError:
        raise ConfigError(f"cannot parse duration {text!r}") from None


def _apply_overrides(scenario: Scenario, overrides) -> Scenario:
    """Apply --set dotted-path overrides to scalar scenario fields."""
    data = scenario.to_json_dict()
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or not isinstance(node.get(part), dict):
                raise ConfigError(f"--set: {key!r} does not address a scenario field")
            node = node[part]
        if not isinstance(node, dict):
            raise ConfigError(f"--set: {key!r} does not address a scenario field")
        node[parts[-1]] = value
    return Scenario.from_dict(data)


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args.set)
    if args.trace:
        # Substitute the synthetic bulk traffic with a recorded trace.
        scenario.sources = [
            {"kind": "trace", "path": args.trace, "scale": args.trace_scale}
        ]
        scenario.validate()
    if args.dump_scenario:
        print(json.dumps(scenario.to_json_dict(), indent=2, sort_keys=True))
        return 0
    jobs, reports, written = run_scenario(
        scenario,
        output_dir=args.output_dir,
        threads=args.threads,
        epoch_csv=args.epoch_csv,
    )
    for path in written:
        print(path)
    return 0


def _cmd_gen(args) -> int:
    stream = gen_cbr(
        parse_rate(args.rate),
        args.size,
        args.dscp,
        parse_time(args.duration),
        start_offset_ns=parse_time(args.offset),
        flow=args.flow,
    )
    count = write_trace(args.out, stream)
    print(f"{args.out}: {count} packets")
    return 0


def _cmd_scale(args) -> int:
    count = write_trace(args.out, scale_trace(read_trace(args.input), args.factor))
    print(f"{args.out}: {count} packets")
    return 0


def _cmd_merge(args) -> int:
    count = write_trace(args.out, merge([read_trace(p) for p in args.inputs]))
    print(f"{args.out}: {count} packets")
    return 0


def _cmd_mininet(args) -> int:
    scenario = builtin_scenarios()["mininet"]
    if args.duration:
        scenario.sim["duration_ns"] = parse_time(args.duration)
    jobs, reports, written = run_scenario(
        scenario, output_dir=args.output_dir, threads=args.threads
    )
    rows = [("algorithm", "probe delay normal (us)", "probe delay low-latency (us)")]
    for (alg, _), report in zip(jobs, reports):
        def fmt(flow):
            stats = report.flow_delays.get(flow)
            return f"{stats['mean_us']:.3f}" if stats else "n/a"
        rows.append((alg, fmt("probe-norm"), fmt("probe-ll")))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    for path in written:
        print(path)
    return 0


def _cmd_report(args) -> int:
    for path in args.reports:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        print(f"== {path}")
        print(_render_report(data))
    return 0


def _render_report(data: dict) -> str:
    rows = [
        ("algorithm", str(data.get("algorithm"))),
        ("ports", str(data.get("n_ports"))),
        ("normalized energy", f"{data.get('normalized_energy', float('nan')):.6f}"),
        ("mean active ports", f"{data.get('mean_active_ports', float('nan')):.4f}"),
    ]
    drops = data.get("drops", {})
    rows.append(
        ("drops normal / low-latency",
         f"{drops.get('normal', 0)} / {drops.get('low_latency', 0)}")
    )
    for name in ("overall", "normal", "low_latency"):
        stats = (data.get("delay_us") or {}).get(name)
        if stats is None:
            rows.append((f"delay {name}", "no packets"))
        else:
            rows.append(
                (f"delay {name} (us)",
                 f"mean {stats['mean_us']:.3f}  median {stats['median_us']:.3f}"
                 f"  p99 {stats['p99_us']:.3f}  n={stats['count']}")
            )
    for flow, stats in sorted((data.get("flow_delays_us") or {}).items()):
        if stats:
            rows.append((f"flow {flow} delay (us)",
                         f"mean {stats['mean_us']:.3f}  n={stats['count']}"))
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eeesim",
        description="Energy-Efficient Ethernet link-aggregate simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario sweep")
    p_run.add_argument("scenario",
                       help=f"builtin name ({', '.join(sorted(builtin_scenarios()))}) "
                            "or scenario JSON path")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker pool size (default: EEESIM_THREADS or CPU count)")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scalar scenario field, e.g. sim.duration_ns=1e8")
    p_run.add_argument("--trace", default=None,
                       help="replace synthetic bulk traffic with a trace-csv file")
    p_run.add_argument("--trace-scale", type=float, default=1.0)
    p_run.add_argument("--epoch-csv", action="store_true",
                       help="also write per-epoch port-load CSVs")
    p_run.add_argument("--dump-scenario", action="store_true",
                       help="print the effective scenario JSON and exit")
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("gen", help="generate a constant-bit-rate trace")
    p_gen.add_argument("--rate", required=True, help="e.g. 100M")
    p_gen.add_argument("--size", type=int, default=125, help="packet size in bytes")
    p_gen.add_argument("--dscp", type=int, default=0)
    p_gen.add_argument("--duration", required=True, help="e.g. 1s")
    p_gen.add_argument("--offset", default="0ns")
    p_gen.add_argument("--flow", default="cbr")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen)

    p_scale = sub.add_parser("scale", help="rescale a trace's arrival times")
    p_scale.add_argument("input")
    p_scale.add_argument("--factor", type=float, required=True,
                         help="divide timestamps by this factor (2 doubles the rate)")
    p_scale.add_argument("--out", required=True)
    p_scale.set_defaults(func=_cmd_scale)

    p_merge = sub.add_parser("merge", help="merge traces into one ordered trace")
    p_merge.add_argument("inputs", nargs="+")
    p_merge.add_argument("--out", required=True)
    p_merge.set_defaults(func=_cmd_merge)

    p_mini = sub.add_parser("mininet-scenario",
                            help="run the built-in emulated-testbed analogue")
    p_mini.add_argument("--output-dir", default=None)
    p_mini.add_argument("--threads", type=int, default=None)
    p_mini.add_argument("--duration", default=None)
    p_mini.set_defaults(func=_cmd_mininet)

    p_rep = sub.add_parser("report", help="render report JSON files as text")
    p_rep.add_argument("reports", nargs="+")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
