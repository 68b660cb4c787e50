"""Folded stacks, flame graph rendering, and the hotspot/IPC table.

Weights are counter deltas rather than raw sample counts, so cycle- and
instruction-weighted graphs share one code path. Attribution follows the
usual sampling convention: the delta between consecutive samples of a
thread belongs to the later sample's call stack, and the first sample of a
thread carries its full cumulative value (counters start at zero when the
session begins).

Hotspot rows are self-time: each delta is charged to the leaf frame only.
Inclusive figures are derivable from the folded output and not tabulated.
"""

import bisect
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from . import kernels, svg
from .errors import EmptyInput, MetricMissing

UNKNOWN_FMT = "[unknown:0x{addr:x}]"

FLAME_WIDTH = 1200  # px, fixed canvas
FLAME_ROW_HEIGHT = 16
_FLAME_HEADER = 24
_MIN_TEXT_WIDTH = 35
_APPROX_CHAR_WIDTH = 7


@dataclass(frozen=True)
class FoldedStack:
    frames: tuple  # symbols, root first
    weight: int

    def __post_init__(self):
        if not self.frames:
            raise ValueError("frames must be non-empty")
        if self.weight <= 0:
            raise ValueError("weight must be positive")

    @property
    def key(self):
        return ";".join(self.frames)


@dataclass(frozen=True)
class HotspotEntry:
    function: str
    total_share: float
    instructions: int
    cycles: int
    ipc: float


def ipc(instructions, cycles):
    """Instructions per cycle; 0 when no cycles elapsed."""
    if cycles == 0:
        return 0.0
    return instructions / cycles


def symbolize(addr, symbol_map):
    """Resolve an address against sorted, non-overlapping [start, end) intervals."""
    starts = [iv[0] for iv in symbol_map]
    i = bisect.bisect_right(starts, addr) - 1
    if i >= 0 and addr < symbol_map[i][1]:
        return symbol_map[i][2]
    return UNKNOWN_FMT.format(addr=addr)


class SymbolMap:
    """Address resolver layering exact trace symbols over interval ranges."""

    def __init__(self, intervals=(), exact=None):
        self.intervals = sorted(intervals)
        for prev, cur in zip(self.intervals, self.intervals[1:]):
            if cur[0] < prev[1]:
                raise ValueError(
                    f"overlapping symbol intervals: {prev!r} and {cur!r}"
                )
        self.exact = dict(exact or {})
        self._starts = np.array([iv[0] for iv in self.intervals], dtype=np.uint64)
        self._ends = np.array([iv[1] for iv in self.intervals], dtype=np.uint64)

    @classmethod
    def from_file(cls, path):
        """Parse a map file of lines ``<hex start> <hex end> <name>``."""
        intervals = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(maxsplit=2)
                if len(parts) != 3:
                    raise ValueError(f"{path}:{line_no}: expected 'start end name'")
                start, end = int(parts[0], 16), int(parts[1], 16)
                intervals.append((start, end, parts[2]))
        return cls(intervals)

    @classmethod
    def from_session(cls, session, intervals=()):
        return cls(intervals, exact=session.symbol_entries())

    def resolve(self, addr):
        hit = self.exact.get(addr)
        if hit is not None:
            return hit
        if self.intervals:
            i = bisect.bisect_right(self._starts_list(), addr) - 1
            if i >= 0 and addr < self.intervals[i][1]:
                return self.intervals[i][2]
        return UNKNOWN_FMT.format(addr=addr)

    def _starts_list(self):
        if not hasattr(self, "_starts_py"):
            self._starts_py = [iv[0] for iv in self.intervals]
        return self._starts_py

    def resolve_many(self, addrs):
        """Bulk resolve; the interval lookup runs through the kernel layer."""
        out = {}
        pending = []
        for a in addrs:
            hit = self.exact.get(a)
            if hit is not None:
                out[a] = hit
            else:
                pending.append(a)
        if pending and len(self.intervals) > 0:
            arr = np.array(pending, dtype=np.uint64)
            idx = kernels.symbolize_indices(arr, self._starts, self._ends)
            for a, i in zip(pending, idx):
                out[a] = (
                    self.intervals[i][2] if i >= 0 else UNKNOWN_FMT.format(addr=a)
                )
        else:
            for a in pending:
                out[a] = UNKNOWN_FMT.format(addr=a)
        return out


def _as_symbol_map(symbol_map):
    if isinstance(symbol_map, SymbolMap):
        return symbol_map
    return SymbolMap(intervals=symbol_map or ())


def _metric_deltas(samples, metric):
    """Per-sample clamped deltas of one metric, in stream order."""
    n = len(samples)
    for rec in samples:
        if metric not in rec.counter_values:
            raise MetricMissing(
                f"sample at ts={rec.timestamp_ns} lacks metric {metric!r}"
            )
    if n >= kernels.FOLD_KERNEL_THRESHOLD:
        tid_ids = {}
        gids = np.empty(n, dtype=np.int64)
        values = np.empty(n, dtype=np.uint64)
        for i, rec in enumerate(samples):
            gids[i] = tid_ids.setdefault(rec.tid, len(tid_ids))
            values[i] = rec.counter_values[metric]
        return kernels.run_deltas(gids, values, len(tid_ids))
    last = {}
    deltas = []
    for rec in samples:
        v = rec.counter_values[metric]
        prev = last.get(rec.tid)
        if prev is None:
            deltas.append(v)
        else:
            deltas.append(v - prev if v >= prev else 0)
        last[rec.tid] = v
    return deltas


def _resolve_stacks(samples, symbol_map):
    """Symbolized root-first frame tuples, one per sample."""
    smap = _as_symbol_map(symbol_map)
    unique = set()
    for rec in samples:
        unique.update(rec.callchain)
    names = smap.resolve_many(unique)
    return [tuple(names[a] for a in reversed(rec.callchain)) for rec in samples]


def counter_totals(samples, metrics):
    """Whole-run totals per metric: the sum of every sample's deltas."""
    samples = list(samples)
    totals = {}
    for name in metrics:
        if samples:
            totals[name] = int(sum(int(d) for d in _metric_deltas(samples, name)))
        else:
            totals[name] = 0
    return totals


def fold_stacks(samples, metric, symbol_map):
    """Aggregate samples into folded stacks weighted by one metric's deltas.

    Output holds one entry per distinct frame sequence, sorted by the
    joined frame string so adjacent stacks merge maximally downstream;
    zero-weight sequences are dropped.
    """
    samples = list(samples)
    if not samples:
        return []
    deltas = _metric_deltas(samples, metric)
    stacks = _resolve_stacks(samples, symbol_map)
    stack_ids = {}
    ids = np.empty(len(samples), dtype=np.int64)
    for i, frames in enumerate(stacks):
        ids[i] = stack_ids.setdefault(frames, len(stack_ids))
    if len(samples) >= kernels.FOLD_KERNEL_THRESHOLD:
        weights = kernels.accumulate_weights(
            ids, np.asarray(deltas, dtype=np.uint64), len(stack_ids)
        )
    else:
        weights = [0] * len(stack_ids)
        for i, d in zip(ids, deltas):
            weights[i] += int(d)
    folded = [
        FoldedStack(frames, int(weights[sid]))
        for frames, sid in stack_ids.items()
        if int(weights[sid]) > 0
    ]
    folded.sort(key=lambda fs: fs.key)
    return folded


def folded_to_text(folded):
    """Standard collapsed-stack text: ``frame;frame;frame <weight>`` per line."""
    return "".join(f"{fs.key} {fs.weight}\n" for fs in folded)


def parse_folded_text(text):
    folded = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        stack, _, weight = line.rpartition(" ")
        folded.append(FoldedStack(tuple(stack.split(";")), int(weight)))
    return folded


def hotspot_table(samples, symbol_map, top_n):
    """Per-leaf-function cycle/instruction totals, ranked by cycle share."""
    if top_n <= 0:
        raise ValueError("top_n must be positive")
    samples = list(samples)
    if not samples:
        return []
    cycles = _metric_deltas(samples, "cycles")
    instructions = _metric_deltas(samples, "instructions")
    smap = _as_symbol_map(symbol_map)
    leaf_addrs = {rec.callchain[0] for rec in samples}
    names = smap.resolve_many(leaf_addrs)
    cyc = {}
    ins = {}
    for rec, c, i in zip(samples, cycles, instructions):
        leaf = names[rec.callchain[0]]
        cyc[leaf] = cyc.get(leaf, 0) + int(c)
        ins[leaf] = ins.get(leaf, 0) + int(i)
    total_cycles = sum(cyc.values())
    entries = [
        HotspotEntry(
            function=fn,
            total_share=(cyc[fn] / total_cycles) if total_cycles else 0.0,
            instructions=ins[fn],
            cycles=cyc[fn],
            ipc=ipc(ins[fn], cyc[fn]),
        )
        for fn in cyc
    ]
    entries.sort(key=lambda e: (-e.total_share, e.function))
    return entries[:top_n]


# --- flame graph rendering ---------------------------------------------------


class _Node:
    __slots__ = ("name", "weight", "children")

    def __init__(self, name):
        self.name = name
        self.weight = 0
        self.children = {}


def _build_tree(folded):
    root = _Node("")
    for fs in folded:
        root.weight += fs.weight
        node = root
        for frame in fs.frames:
            child = node.children.get(frame)
            if child is None:
                child = node.children[frame] = _Node(frame)
            child.weight += fs.weight
            node = child
    return root


def render_flamegraph(folded, metric_label):
    """Self-contained SVG flame graph: width ∝ weight, depth grows upward."""
    folded = list(folded)
    total = sum(fs.weight for fs in folded)
    if not folded or total <= 0:
        raise EmptyInput("no folded stacks to draw")
    root = _build_tree(folded)
    max_depth = max(len(fs.frames) for fs in folded)
    height = _FLAME_HEADER + max_depth * FLAME_ROW_HEIGHT + 4

    def px(weight_pos):
        return int(weight_pos * FLAME_WIDTH / total + 0.5)

    out = [svg.header(FLAME_WIDTH, height)]
    out.append(
        f'<rect x="0" y="0" width="{FLAME_WIDTH}" height="{height}" '
        'fill="#f8f8f8"/>\n'
    )
    out.append(
        svg.text_el(
            FLAME_WIDTH // 2,
            16,
            f"flame graph: {metric_label} (total {total})",
            size=13,
            anchor="middle",
        )
    )

    def emit(node, depth, start):
        # Children tile the front of the parent's weight interval in
        # alphabetical order; the node's self weight occupies the tail.
        x0, x1 = px(start), px(start + node.weight)
        width = x1 - x0
        if width > 0:
            y = height - 4 - (depth + 1) * FLAME_ROW_HEIGHT
            pct = 100.0 * node.weight / total
            title = f"{node.name} ({node.weight}, {svg.fmt(pct)}%)"
            out.append("<g>\n")
            out.append(f"<title>{escape(title)}</title>\n")
            out.append(
                f'<rect x="{x0}" y="{y}" width="{width}" '
                f'height="{FLAME_ROW_HEIGHT - 1}" fill="{svg.warm_color(node.name)}" '
                'stroke="#f0f0f0" stroke-width="0.5"/>\n'
            )
            if width >= _MIN_TEXT_WIDTH:
                room = (width - 6) // _APPROX_CHAR_WIDTH
                label = node.name
                if len(label) > room:
                    label = label[: max(room - 2, 0)] + ".."
                if label:
                    out.append(
                        svg.text_el(x0 + 3, y + FLAME_ROW_HEIGHT - 5, label, size=11)
                    )
            out.append("</g>\n")
        cursor = start
        for name in sorted(node.children):
            child = node.children[name]
            emit(child, depth + 1, cursor)
            cursor += child.weight

    cursor = 0
    for name in sorted(root.children):
        child = root.children[name]
        emit(child, 0, cursor)
        cursor += child.weight
    out.append("</svg>\n")
    return "".join(out)
