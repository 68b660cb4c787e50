"""Command-line entry point: stat, record, flamegraph, roofline, roofs.

Every hardware-dependent subcommand accepts --replay / file inputs so the
whole surface stays exercisable on hosts without the target hardware.
Exit codes: 0 success, 1 usage/format, 2 platform capability, 3 child/run
failure. Human-readable tables go to stdout, machine output behind --json,
plots only ever to files.
"""

import argparse
import json
import os
import sys

from . import hotspots
from .errors import (
    BackendUnavailable,
    ChildFailed,
    EmptyInput,
    GroupBudgetExceeded,
    MetricMissing,
    ModelSchemaError,
    MperfError,
    PermissionDenied,
    ReportMissing,
    SamplingUnsupported,
    TraceFormatError,
    UnknownPlatform,
)
from .platform import detect_platform
from .roofline import analysis as roofline_analysis
from .sampling import (
    DEFAULT_SAMPLE_FREQ_HZ,
    EventRequest,
    ReplaySession,
    open_session,
    plan_groups,
    serialize_record,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PLATFORM = 2
EXIT_CHILD = 3


class _Parser(argparse.ArgumentParser):
    """argparse that honors the exit-code contract (usage errors exit 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _fail(code, message):
    sys.stderr.write(f"mperf: {message}\n")
    return code


def _parse_events(profile, spec):
    names = [n.strip() for n in spec.split(",") if n.strip()]
    if not names:
        raise _CliError(EXIT_USAGE, "no events requested")
    events = []
    for name in names:
        event = profile.event(name)
        if event is None:
            valid = ", ".join(e.name for e in profile.events)
            raise _CliError(
                EXIT_USAGE,
                f"unknown event {name!r}; valid events for {profile.name}: {valid}",
            )
        events.append(event)
    return events


class _CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _symbol_map_for(session, symbols_path):
    intervals = ()
    if symbols_path:
        intervals = hotspots.SymbolMap.from_file(symbols_path).intervals
    return hotspots.SymbolMap(intervals, exact=session.symbol_entries())


def _session_notes(session):
    if session.corrupt_records:
        sys.stderr.write(
            f"mperf: skipped {len(session.corrupt_records)} corrupt record(s); "
            f"first: line {session.corrupt_records[0][0]} "
            f"({session.corrupt_records[0][1]})\n"
        )
    if session.order_warnings:
        sys.stderr.write(
            f"mperf: {session.order_warnings} out-of-order timestamp(s) kept in "
            "stream order\n"
        )


# --- stat ---------------------------------------------------------------------


def cmd_stat(args):
    profile = detect_platform()
    events = _parse_events(profile, args.events)
    names = [e.name for e in events]
    if args.replay:
        session = ReplaySession(args.replay)
        samples = list(session)
        _session_notes(session)
        totals = hotspots.counter_totals(samples, names)
    else:
        if not args.target:
            raise _CliError(EXIT_USAGE, "stat needs a command to run (or --replay)")
        from . import perf_live

        plan = plan_groups(profile, [EventRequest(e) for e in events])
        totals, returncode = perf_live.run_counted(plan, args.target)
        if returncode != 0:
            raise _CliError(EXIT_CHILD, f"target exited with status {returncode}")
    ipc_row = None
    if "instructions" in totals and "cycles" in totals:
        ipc_row = hotspots.ipc(totals["instructions"], totals["cycles"])
    if args.json:
        obj = {"platform": profile.name, "totals": totals}
        if ipc_row is not None:
            obj["ipc"] = round(ipc_row, 6)
        print(json.dumps(obj, indent=2))
    else:
        print(f"platform: {profile.name}")
        width = max(len(n) for n in totals) + 2
        for name in names:
            print(f"{name:<{width}} {totals[name]}")
        if ipc_row is not None:
            print(f"{'IPC':<{width}} {ipc_row:.2f}")
    return EXIT_OK


# --- record -------------------------------------------------------------------


def cmd_record(args):
    profile = detect_platform()
    events = _parse_events(profile, args.events)
    requests = [
        EventRequest(e, want_sampling=True, sample_frequency_hz=args.freq)
        for e in events
    ]
    try:
        plan = plan_groups(profile, requests)
    except SamplingUnsupported as exc:
        return _fail(
            EXIT_PLATFORM,
            f"cannot sample on {profile.name}: {exc} "
            f"(out-of-order: {profile.out_of_order}, "
            f"rvv: {profile.rvv_version.value}, "
            f"upstream linux: {profile.upstream_linux.value})",
        )
    print(f"group plan: {plan.describe()} @ {plan.sample_frequency_hz} Hz")
    if args.replay:
        session = open_session(plan, replay=args.replay)
    else:
        if not args.target:
            raise _CliError(EXIT_USAGE, "record needs a command to run (or --replay)")
        session = open_session(plan, target=args.target)
    count = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec in session:
            fh.write(serialize_record(rec) + "\n")
            count += 1
    _session_notes(session)
    print(f"wrote {count} sample(s) to {args.out}")
    return EXIT_OK


# --- flamegraph -----------------------------------------------------------------


def cmd_flamegraph(args):
    if args.metric not in ("cycles", "instructions"):
        raise _CliError(
            EXIT_USAGE, f"unknown metric {args.metric!r}; pick cycles or instructions"
        )
    session = ReplaySession(args.trace)
    samples = list(session)
    _session_notes(session)
    symbol_map = _symbol_map_for(session, args.symbols)
    folded = hotspots.fold_stacks(samples, args.metric, symbol_map)
    if args.folded:
        with open(args.folded, "w", encoding="utf-8") as fh:
            fh.write(hotspots.folded_to_text(folded))
        print(f"wrote folded stacks to {args.folded}")
    out_svg = args.out
    if out_svg is None and not args.folded:
        out_svg = "flamegraph.svg"
    if out_svg is not None:
        doc = hotspots.render_flamegraph(folded, args.metric)
        with open(out_svg, "w", encoding="utf-8") as fh:
            fh.write(doc)
        print(f"wrote flame graph to {out_svg}")
    has_both = samples and all(
        "cycles" in r.counter_values and "instructions" in r.counter_values
        for r in samples
    )
    if not has_both:
        print("hotspot table skipped: trace lacks cycles+instructions counters")
        return EXIT_OK
    entries = hotspots.hotspot_table(samples, symbol_map, args.top)
    if args.json:
        print(
            json.dumps(
                [
                    {
                        "function": e.function,
                        "total_share": round(e.total_share, 6),
                        "instructions": e.instructions,
                        "cycles": e.cycles,
                        "ipc": round(e.ipc, 6),
                    }
                    for e in entries
                ],
                indent=2,
            )
        )
    else:
        name_w = max([len(e.function) for e in entries] + [8]) + 2
        print(f"{'function':<{name_w}} {'total':>8} {'instructions':>16} "
              f"{'cycles':>16} {'ipc':>6}")
        for e in entries:
            print(
                f"{e.function:<{name_w}} {e.total_share * 100:>7.2f}% "
                f"{e.instructions:>16} {e.cycles:>16} {e.ipc:>6.2f}"
            )
    return EXIT_OK


# --- roofline --------------------------------------------------------------------


def cmd_roofline(args):
    if not args.target:
        raise _CliError(EXIT_USAGE, "roofline needs a command to run after --")
    model = roofline_analysis.load_machine_model(args.machine)
    baseline, instrumented = roofline_analysis.two_phase_run(args.target, args.out_dir)
    correlation = roofline_analysis.correlate(baseline, instrumented)
    points = []
    classes = []
    warnings = list(correlation.warnings)
    for row in correlation:
        try:
            point = roofline_analysis.derive_point(row)
        except MperfError as exc:
            warnings.append(f"excluded: {exc}")
            continue
        points.append(point)
        classes.append(roofline_analysis.classify(point, model))
    report = roofline_analysis.analysis_to_json(model, points, classes, warnings)
    report_path = os.path.join(args.out_dir, "roofline.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report)
    svg_path = os.path.join(args.out_dir, "roofline.svg")
    if points:
        doc = roofline_analysis.render_roofline(model, points)
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(doc)
    for warning in warnings:
        sys.stderr.write(f"mperf: {warning}\n")
    if args.json:
        print(report, end="")
    else:
        print(f"machine: {model.name} (peak {model.peak_gflops:g} GFLOP/s, "
              f"mem {model.mem_bandwidth_gbs:g} GB/s, knee {model.knee_ai:.4f})")
        if points:
            label_w = max(len(p.loop.label) for p in points) + 2
            print(f"{'loop':<{label_w}} {'ai':>10} {'gflops':>10} "
                  f"{'bound':>14} {'overhead':>9}")
            for point, cls in zip(points, classes):
                print(
                    f"{point.loop.label:<{label_w}} "
                    f"{point.arithmetic_intensity_fp:>10.4f} "
                    f"{point.gflops:>10.4f} {cls.kind.value:>14} "
                    f"{point.overhead_ratio:>8.2f}x"
                )
        else:
            print("no valid roofline points")
        print(f"wrote {report_path}" + (f" and {svg_path}" if points else ""))
    return EXIT_OK


# --- roofs ----------------------------------------------------------------------


def cmd_roofs(args):
    try:
        peak = roofline_analysis.theoretical_compute_peak(
            args.ipc, args.flops_per_insn, args.freq_ghz
        )
        bandwidth = roofline_analysis.bandwidth_from_bytes_per_cycle(
            args.bytes_per_cycle, args.freq_ghz
        )
    except ValueError as exc:
        raise _CliError(EXIT_USAGE, str(exc))
    model = roofline_analysis.MachineModel(
        name=args.name,
        frequency_ghz=args.freq_ghz,
        peak_gflops=peak,
        mem_bandwidth_gbs=bandwidth,
    )
    text = roofline_analysis.model_to_json(model)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote machine model to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


# --- wiring ----------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="mperf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_stat = sub.add_parser("stat", help="per-event totals and IPC", parents=[])
    p_stat.add_argument("--replay", help="read samples from a trace file")
    p_stat.add_argument("--events", default="cycles,instructions")
    p_stat.add_argument("--json", action="store_true")
    p_stat.add_argument("target", nargs="*", help="command to run")
    p_stat.set_defaults(func=cmd_stat)

    p_record = sub.add_parser("record", help="sampled recording to a trace file")
    p_record.add_argument("--replay", help="re-record from an existing trace")
    p_record.add_argument("--freq", type=int, default=DEFAULT_SAMPLE_FREQ_HZ)
    p_record.add_argument("-o", "--out", default="mperf_trace.jsonl")
    p_record.add_argument("--events", default="cycles,instructions")
    p_record.add_argument("target", nargs="*", help="command to run")
    p_record.set_defaults(func=cmd_record)

    p_flame = sub.add_parser("flamegraph", help="flame graph + hotspot table")
    p_flame.add_argument("trace", help="trace file (record output)")
    p_flame.add_argument("--metric", default="cycles")
    p_flame.add_argument("--out", help="SVG output path")
    p_flame.add_argument("--folded", help="collapsed-stack text output path")
    p_flame.add_argument("--symbols", help="symbol map file: hex-start hex-end name")
    p_flame.add_argument("--top", type=int, default=10)
    p_flame.add_argument("--json", action="store_true")
    p_flame.set_defaults(func=cmd_flamegraph)

    p_roof = sub.add_parser("roofline", help="two-phase run and roofline report")
    p_roof.add_argument("--machine", required=True, help="machine model JSON")
    p_roof.add_argument("--out-dir", default="mperf_roofline")
    p_roof.add_argument("--json", action="store_true")
    p_roof.add_argument("target", nargs=argparse.REMAINDER,
                        help="instrumented command (after --)")
    p_roof.set_defaults(func=cmd_roofline)

    p_roofs = sub.add_parser("roofs", help="compute a machine model from clock math")
    p_roofs.add_argument("--ipc", type=float, required=True)
    p_roofs.add_argument("--flops-per-insn", type=float, required=True)
    p_roofs.add_argument("--freq-ghz", type=float, required=True)
    p_roofs.add_argument("--bytes-per-cycle", type=float, required=True)
    p_roofs.add_argument("--name", default="custom")
    p_roofs.add_argument("-o", "--out")
    p_roofs.set_defaults(func=cmd_roofs)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "target", None) and args.target and args.target[0] == "--":
        args.target = args.target[1:]
    try:
        return args.func(args)
    except _CliError as exc:
        return _fail(exc.code, str(exc))
    except TraceFormatError as exc:
        return _fail(EXIT_USAGE, f"trace format error: {exc}")
    except (MetricMissing, ModelSchemaError, GroupBudgetExceeded, EmptyInput) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (SamplingUnsupported, BackendUnavailable, PermissionDenied,
            UnknownPlatform) as exc:
        return _fail(EXIT_PLATFORM, str(exc))
    except (ChildFailed, ReportMissing) as exc:
        return _fail(EXIT_CHILD, str(exc))
    except OSError as exc:
        return _fail(EXIT_USAGE, str(exc))


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
