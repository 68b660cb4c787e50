"""Two-phase run coordination, metric derivation, and roofline rendering.

Throughput and traffic are computed against the baseline phase's wall time:
instrumentation overhead corrupts absolute timing, so the instrumented run
only contributes counters, and the baseline/instrumented time ratio is
surfaced as overhead_ratio for the user to judge how much to trust it.
"""

import enum
import json
import math
import os
import subprocess
from dataclasses import dataclass, field

from ..errors import (
    ChildFailed,
    EmptyInput,
    ModelSchemaError,
    ReportMissing,
    ZeroTime,
    ZeroTraffic,
)
from .. import svg
from .runtime import (
    ENV_MODE,
    ENV_OUT,
    PHASE_BASELINE,
    PHASE_INSTRUMENTED,
    LoopCounters,
    parse_report,
)

MODEL_SCHEMA_HELP = (
    'machine model JSON: {"name": str, "frequency_ghz": num > 0, '
    '"peak_gflops": num > 0, "mem_bandwidth_gbs": num > 0, '
    '"extra_ceilings": [{"label": str, "gflops"|"gbs": num}, ...]?}'
)


@dataclass(frozen=True)
class ExtraCeiling:
    label: str
    value: float
    kind: str  # "gflops" or "gbs"


@dataclass(frozen=True)
class MachineModel:
    name: str
    frequency_ghz: float
    peak_gflops: float
    mem_bandwidth_gbs: float
    extra_ceilings: tuple = ()

    def __post_init__(self):
        for fname in ("frequency_ghz", "peak_gflops", "mem_bandwidth_gbs"):
            if getattr(self, fname) <= 0:
                raise ModelSchemaError(f"{fname} must be positive")
        for ceiling in self.extra_ceilings:
            if ceiling.value <= 0:
                raise ModelSchemaError(f"ceiling {ceiling.label!r} must be positive")
            if ceiling.kind == "gflops" and ceiling.value > self.peak_gflops:
                raise ModelSchemaError(
                    f"extra compute ceiling {ceiling.label!r} exceeds peak_gflops"
                )

    @property
    def knee_ai(self):
        """Arithmetic intensity where the bandwidth roof meets the compute roof."""
        return self.peak_gflops / self.mem_bandwidth_gbs


class BoundKind(str, enum.Enum):
    MEMORY = "memory-bound"
    COMPUTE = "compute-bound"


@dataclass(frozen=True)
class BoundClass:
    kind: BoundKind
    attainable_gflops: float
    efficiency: float


@dataclass(frozen=True)
class RooflinePoint:
    loop: object  # LoopInfo
    arithmetic_intensity_fp: float
    arithmetic_intensity_total: float
    gflops: float
    gbs: float
    baseline_time_s: float
    instrumented_time_s: float
    overhead_ratio: float


@dataclass(frozen=True)
class CorrelatedLoop:
    info: object
    counters: LoopCounters
    baseline_wall_ns: int  # None when the loop is missing from baseline
    instrumented_wall_ns: int


@dataclass
class Correlation:
    rows: list
    warnings: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)


def two_phase_run(command, out_dir, extra_env=None):
    """Run the instrumented binary twice (baseline then instrumented).

    Each phase gets its own MPERF_ROOFLINE_OUT path under out_dir; both
    reports are parsed and returned as (baseline, instrumented).
    """
    os.makedirs(out_dir, exist_ok=True)
    reports = {}
    for phase in (PHASE_BASELINE, PHASE_INSTRUMENTED):
        path = os.path.join(out_dir, f"{phase}_report.json")
        if os.path.exists(path):
            os.unlink(path)
        env = dict(os.environ)
        env[ENV_MODE] = phase
        env[ENV_OUT] = path
        if extra_env:
            env.update(extra_env)
        proc = subprocess.run(command, env=env)
        if proc.returncode != 0:
            raise ChildFailed(phase, proc.returncode)
        if not os.path.exists(path):
            raise ReportMissing(phase, path)
        reports[phase] = parse_report(path)
    return reports[PHASE_BASELINE], reports[PHASE_INSTRUMENTED]


def _merge_duplicates(report):
    merged = {}
    for rec in report.records:
        slot = merged.get(rec.info)
        if slot is None:
            merged[rec.info] = [
                LoopCounters(
                    rec.counters.load_bytes,
                    rec.counters.store_bytes,
                    rec.counters.int_ops,
                    rec.counters.fp_ops,
                ),
                rec.wall_time_ns,
            ]
        else:
            slot[0].merge(rec.counters)
            slot[1] += rec.wall_time_ns
    return merged


def correlate(baseline, instrumented):
    """Join the two phase reports on (filename, line, func_name).

    Counters come from the instrumented record, time from the baseline one.
    Duplicate keys inside one report merge by summation before the join.
    Loops present in only one report become warnings; an instrumented-only
    loop still yields a row, timed by its own (instrumented) wall time.
    """
    base = _merge_duplicates(baseline)
    inst = _merge_duplicates(instrumented)
    rows = []
    warnings = []
    for info in sorted(inst, key=lambda i: (i.filename, i.line, i.func_name)):
        counters, inst_wall = inst[info]
        if info in base:
            rows.append(CorrelatedLoop(info, counters, base[info][1], inst_wall))
        else:
            warnings.append(
                f"{info.label}: absent from baseline report; using instrumented time"
            )
            rows.append(CorrelatedLoop(info, counters, None, inst_wall))
    for info in sorted(base, key=lambda i: (i.filename, i.line, i.func_name)):
        if info not in inst:
            warnings.append(f"{info.label}: absent from instrumented report; dropped")
    return Correlation(rows, warnings)


def derive_point(row):
    """Turn one correlated loop into a roofline point."""
    wall_ns = row.baseline_wall_ns if row.baseline_wall_ns is not None else row.instrumented_wall_ns
    if wall_ns is None or wall_ns <= 0:
        raise ZeroTime(f"{row.info.label}: no usable wall time")
    total_bytes = row.counters.total_bytes
    if total_bytes <= 0:
        raise ZeroTraffic(f"{row.info.label}: no memory traffic recorded")
    baseline_s = wall_ns / 1e9
    instrumented_s = row.instrumented_wall_ns / 1e9
    fp = row.counters.fp_ops
    return RooflinePoint(
        loop=row.info,
        arithmetic_intensity_fp=fp / total_bytes,
        arithmetic_intensity_total=(fp + row.counters.int_ops) / total_bytes,
        gflops=fp / baseline_s / 1e9,
        gbs=total_bytes / baseline_s / 1e9,
        baseline_time_s=baseline_s,
        instrumented_time_s=instrumented_s,
        overhead_ratio=instrumented_s / baseline_s,
    )


def theoretical_compute_peak(ipc, flops_per_instruction, frequency_ghz):
    """Peak GFLOP/s as instruction rate × per-instruction FLOPs × frequency."""
    if ipc <= 0 or flops_per_instruction <= 0 or frequency_ghz <= 0:
        raise ValueError("all compute-peak factors must be positive")
    return ipc * flops_per_instruction * frequency_ghz


def bandwidth_from_bytes_per_cycle(bytes_per_cycle, frequency_ghz):
    """Memory bandwidth in GB/s from a bytes/cycle figure and the core clock."""
    if bytes_per_cycle <= 0 or frequency_ghz <= 0:
        raise ValueError("bandwidth factors must be positive")
    return bytes_per_cycle * frequency_ghz


def classify(point, model):
    """Memory- vs compute-bound under the model; ties go to compute-bound."""
    ai = point.arithmetic_intensity_fp
    bw_limit = ai * model.mem_bandwidth_gbs
    attainable = min(model.peak_gflops, bw_limit)
    kind = BoundKind.MEMORY if bw_limit < model.peak_gflops else BoundKind.COMPUTE
    efficiency = point.gflops / attainable if attainable > 0 else 0.0
    return BoundClass(kind, attainable, efficiency)


# --- machine model I/O ---------------------------------------------------------


def model_from_dict(obj):
    try:
        ceilings = tuple(
            ExtraCeiling(
                label=str(c["label"]),
                value=float(c["gflops"] if "gflops" in c else c["gbs"]),
                kind="gflops" if "gflops" in c else "gbs",
            )
            for c in obj.get("extra_ceilings", [])
        )
        return MachineModel(
            name=str(obj["name"]),
            frequency_ghz=float(obj["frequency_ghz"]),
            peak_gflops=float(obj["peak_gflops"]),
            mem_bandwidth_gbs=float(obj["mem_bandwidth_gbs"]),
            extra_ceilings=ceilings,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelSchemaError(f"bad machine model ({exc}); expected {MODEL_SCHEMA_HELP}")


def load_machine_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ModelSchemaError(f"cannot read model file: {exc}")
    except json.JSONDecodeError as exc:
        raise ModelSchemaError(f"model file is not JSON: {exc}")
    return model_from_dict(obj)


def model_to_json(model):
    obj = {
        "name": model.name,
        "frequency_ghz": model.frequency_ghz,
        "peak_gflops": model.peak_gflops,
        "mem_bandwidth_gbs": model.mem_bandwidth_gbs,
    }
    if model.extra_ceilings:
        obj["extra_ceilings"] = [
            {"label": c.label, c.kind: c.value} for c in model.extra_ceilings
        ]
    return json.dumps(obj, indent=2) + "\n"


def analysis_to_json(model, points, classes, warnings=()):
    """Machine-readable analysis report for all derived points."""
    obj = {
        "machine": json.loads(model_to_json(model)),
        "points": [
            {
                "func": p.loop.func_name,
                "file": p.loop.filename,
                "line": p.loop.line,
                "arithmetic_intensity_fp": p.arithmetic_intensity_fp,
                "arithmetic_intensity_total": p.arithmetic_intensity_total,
                "gflops": p.gflops,
                "gbs": p.gbs,
                "baseline_time_s": p.baseline_time_s,
                "instrumented_time_s": p.instrumented_time_s,
                "overhead_ratio": p.overhead_ratio,
                "bound": c.kind.value,
                "attainable_gflops": c.attainable_gflops,
                "efficiency": c.efficiency,
            }
            for p, c in zip(points, classes)
        ],
        "warnings": list(warnings),
    }
    return json.dumps(obj, indent=2) + "\n"


# --- roofline plot ---------------------------------------------------------------

_PLOT_W = 860
_PLOT_H = 560
_MARGIN_L = 70
_MARGIN_R = 40
_MARGIN_T = 40
_MARGIN_B = 60


def _decade_floor(v):
    return 10.0 ** math.floor(math.log10(v))


def _decade_ceil(v):
    return 10.0 ** math.ceil(math.log10(v))


def render_roofline(model, points):
    """Log-log roofline SVG: bandwidth slope, compute roof, labeled points.

    Points whose throughput exceeds the roof at their intensity get a
    warning ring. Output is deterministic for identical inputs.
    """
    plottable = [
        p for p in points if p.arithmetic_intensity_fp > 0 and p.gflops > 0
    ]
    if not plottable:
        raise EmptyInput("no plottable roofline points")
    peak = model.peak_gflops
    bw = model.mem_bandwidth_gbs
    knee = model.knee_ai

    xs = [p.arithmetic_intensity_fp for p in plottable] + [knee]
    ys = [p.gflops for p in plottable] + [peak]
    x_lo = _decade_floor(min(xs)) / 10.0
    x_hi = _decade_ceil(max(xs)) * 10.0
    y_lo = min(_decade_floor(min(ys)) / 10.0, _decade_floor(bw * x_lo))
    y_hi = _decade_ceil(max(ys)) * 10.0

    inner_w = _PLOT_W - _MARGIN_L - _MARGIN_R
    inner_h = _PLOT_H - _MARGIN_T - _MARGIN_B
    lx_lo, lx_hi = math.log10(x_lo), math.log10(x_hi)
    ly_lo, ly_hi = math.log10(y_lo), math.log10(y_hi)

    def sx(v):
        return _MARGIN_L + (math.log10(v) - lx_lo) / (lx_hi - lx_lo) * inner_w

    def sy(v):
        return _MARGIN_T + (ly_hi - math.log10(v)) / (ly_hi - ly_lo) * inner_h

    out = [svg.header(_PLOT_W, _PLOT_H)]
    out.append(
        f'<rect x="0" y="0" width="{_PLOT_W}" height="{_PLOT_H}" fill="#ffffff"/>\n'
    )
    out.append(
        svg.text_el(
            _PLOT_W // 2,
            22,
            f"roofline: {model.name} (peak {svg.fmt(peak)} GFLOP/s, "
            f"mem {svg.fmt(bw)} GB/s)",
            size=14,
            anchor="middle",
        )
    )

    # Decade grid with labels.
    d = int(math.floor(lx_lo))
    while d <= math.ceil(lx_hi):
        v = 10.0 ** d
        if x_lo <= v <= x_hi:
            x = sx(v)
            out.append(
                f'<line x1="{svg.fmt(x)}" y1="{_MARGIN_T}" x2="{svg.fmt(x)}" '
                f'y2="{_PLOT_H - _MARGIN_B}" stroke="#dddddd" stroke-width="1"/>\n'
            )
            out.append(
                svg.text_el(x, _PLOT_H - _MARGIN_B + 16, f"{v:g}", size=11, anchor="middle")
            )
        d += 1
    d = int(math.floor(ly_lo))
    while d <= math.ceil(ly_hi):
        v = 10.0 ** d
        if y_lo <= v <= y_hi:
            y = sy(v)
            out.append(
                f'<line x1="{_MARGIN_L}" y1="{svg.fmt(y)}" x2="{_PLOT_W - _MARGIN_R}" '
                f'y2="{svg.fmt(y)}" stroke="#dddddd" stroke-width="1"/>\n'
            )
            out.append(
                svg.text_el(_MARGIN_L - 6, y + 4, f"{v:g}", size=11, anchor="end")
            )
        d += 1

    out.append(
        svg.text_el(
            _MARGIN_L + inner_w // 2,
            _PLOT_H - 16,
            "arithmetic intensity (FLOP/byte)",
            size=12,
            anchor="middle",
        )
    )
    out.append(
        f'<text x="18" y="{_MARGIN_T + inner_h // 2}" font-size="12" '
        'font-family="Verdana" text-anchor="middle" '
        f'transform="rotate(-90 18 {_MARGIN_T + inner_h // 2})">GFLOP/s</text>\n'
    )

    # Bandwidth roof: slope-1 line in log-log space, clipped to the y range.
    x_start = max(x_lo, y_lo / bw)
    if x_start < knee:
        out.append(
            f'<line x1="{svg.fmt(sx(x_start))}" y1="{svg.fmt(sy(bw * x_start))}" '
            f'x2="{svg.fmt(sx(knee))}" y2="{svg.fmt(sy(peak))}" '
            'stroke="#2266aa" stroke-width="2"/>\n'
        )
    # Compute roof, knee to the right edge.
    out.append(
        f'<line x1="{svg.fmt(sx(knee))}" y1="{svg.fmt(sy(peak))}" '
        f'x2="{svg.fmt(sx(x_hi))}" y2="{svg.fmt(sy(peak))}" '
        'stroke="#aa3322" stroke-width="2"/>\n'
    )
    out.append(
        svg.text_el(
            sx(knee),
            sy(peak) - 8,
            f"knee @ {svg.fmt(knee, 4)}",
            size=11,
            anchor="middle",
            fill="#555555",
        )
    )
    for ceiling in model.extra_ceilings:
        if ceiling.kind == "gflops":
            start = max(x_lo, ceiling.value / bw)
            out.append(
                f'<line x1="{svg.fmt(sx(start))}" y1="{svg.fmt(sy(ceiling.value))}" '
                f'x2="{svg.fmt(sx(x_hi))}" y2="{svg.fmt(sy(ceiling.value))}" '
                'stroke="#aa3322" stroke-width="1" stroke-dasharray="5,3"/>\n'
            )
            out.append(
                svg.text_el(
                    sx(x_hi) - 4,
                    sy(ceiling.value) - 4,
                    ceiling.label,
                    size=10,
                    anchor="end",
                    fill="#555555",
                )
            )
        else:
            cb = ceiling.value
            cx_start = max(x_lo, y_lo / cb)
            cx_end = min(x_hi, peak / cb)
            if cx_start < cx_end:
                out.append(
                    f'<line x1="{svg.fmt(sx(cx_start))}" y1="{svg.fmt(sy(cb * cx_start))}" '
                    f'x2="{svg.fmt(sx(cx_end))}" y2="{svg.fmt(sy(cb * cx_end))}" '
                    'stroke="#2266aa" stroke-width="1" stroke-dasharray="5,3"/>\n'
                )
                out.append(
                    svg.text_el(
                        sx(cx_start) + 4,
                        sy(cb * cx_start) - 4,
                        ceiling.label,
                        size=10,
                        fill="#555555",
                    )
                )

    for p in plottable:
        ai = p.arithmetic_intensity_fp
        attainable = min(peak, ai * bw)
        x, y = sx(ai), sy(p.gflops)
        above_roof = p.gflops > attainable * (1.0 + 1e-9)
        if above_roof:
            out.append(
                f'<circle cx="{svg.fmt(x)}" cy="{svg.fmt(y)}" r="7" fill="none" '
                'stroke="#cc0000" stroke-width="2"/>\n'
            )
        out.append(
            f'<circle cx="{svg.fmt(x)}" cy="{svg.fmt(y)}" r="4" fill="#336699"/>\n'
        )
        label = p.loop.label + (" [above roof]" if above_roof else "")
        out.append(svg.text_el(x + 8, y - 6, label, size=11))
    out.append("</svg>\n")
    return "".join(out)
