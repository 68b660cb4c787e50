"""Runtime half of the instrumentation protocol.

Instrumented programs call the four notify/count entry points around and
inside outlined loop regions; at process exit the accumulated per-loop
records are written as a JSON run report. Entry-point names are the ABI:

    mperf_roofline_internal_notify_loop_begin(info) -> handle
    mperf_roofline_internal_is_instrumented_profiling() -> bool
    mperf_roofline_internal_add_counts(handle, lb, sb, io, fo)
    mperf_roofline_internal_notify_loop_end(handle)
    finalize_report()

Counters accumulate per-thread on the open handle and merge into the
global registry when the region closes, keeping per-invocation overhead to
two timestamps in baseline mode. Protocol violations (stale handles,
out-of-order ends) are counted as misuse diagnostics, never raised: an
instrumented run is a diagnostic tool and must not take the program down.

Environment protocol: MPERF_ROOFLINE_MODE selects the phase ("instrumented"
enables counting; anything else is baseline), MPERF_ROOFLINE_FILTER limits
instrumentation to comma-separated "<filename>:<line>" keys, and
MPERF_ROOFLINE_OUT names the report path (default ./mperf_roofline_<pid>.json).
"""

import atexit
import json
import os
import sys
import threading
import time
from dataclasses import dataclass, field

ENV_MODE = "MPERF_ROOFLINE_MODE"
ENV_FILTER = "MPERF_ROOFLINE_FILTER"
ENV_OUT = "MPERF_ROOFLINE_OUT"

PHASE_BASELINE = "baseline"
PHASE_INSTRUMENTED = "instrumented"


@dataclass(frozen=True)
class LoopInfo:
    line: int
    filename: str
    func_name: str

    @property
    def key(self):
        return f"{self.filename}:{self.line}"

    @property
    def label(self):
        return f"{self.func_name}@{self.filename}:{self.line}"


@dataclass
class LoopCounters:
    load_bytes: int = 0
    store_bytes: int = 0
    int_ops: int = 0
    fp_ops: int = 0

    def add(self, load_bytes, store_bytes, int_ops, fp_ops):
        self.load_bytes += load_bytes
        self.store_bytes += store_bytes
        self.int_ops += int_ops
        self.fp_ops += fp_ops

    def merge(self, other):
        self.add(other.load_bytes, other.store_bytes, other.int_ops, other.fp_ops)

    @property
    def total_bytes(self):
        return self.load_bytes + self.store_bytes


@dataclass
class LoopRecord:
    info: LoopInfo
    counters: LoopCounters
    invocations: int
    wall_time_ns: int
    phase: str


@dataclass
class RunReport:
    phase: str
    records: list = field(default_factory=list)

    def by_key(self):
        return {r.info: r for r in self.records}


class LoopHandle:
    """Thread-affine open-region token handed out by notify_loop_begin."""

    __slots__ = ("info", "thread_id", "begin_ns", "counters", "open")

    def __init__(self, info, thread_id, begin_ns):
        self.info = info
        self.thread_id = thread_id
        self.begin_ns = begin_ns
        self.counters = LoopCounters()
        self.open = True


class _Registry:
    """Process-wide accumulator behind the entry points."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records = {}  # LoopInfo -> [invocations, wall_ns, LoopCounters]
        self._tls = threading.local()
        self.misuse_count = 0
        self._finalized = False
        self._atexit_installed = False
        self._mode = os.environ.get(ENV_MODE, "")
        raw_filter = os.environ.get(ENV_FILTER)
        self._filter = (
            {k.strip() for k in raw_filter.split(",") if k.strip()}
            if raw_filter
            else None
        )
        self._out_path = os.environ.get(ENV_OUT) or f"./mperf_roofline_{os.getpid()}.json"

    @property
    def phase(self):
        return PHASE_INSTRUMENTED if self._mode == PHASE_INSTRUMENTED else PHASE_BASELINE

    def _stack(self):
        stack = getattr(self._tls, "stack", None)
        if stack is None:
            stack = self._tls.stack = []
        return stack

    def loop_begin(self, info):
        if not self._atexit_installed:
            with self._lock:
                if not self._atexit_installed:
                    atexit.register(self.finalize)
                    self._atexit_installed = True
        with self._lock:
            if info not in self._records:
                self._records[info] = [0, 0, LoopCounters()]
        handle = LoopHandle(info, threading.get_ident(), time.monotonic_ns())
        self._stack().append(handle)
        return handle

    def instrumented_for(self, info):
        if self._mode != PHASE_INSTRUMENTED:
            return False
        if self._filter is None:
            return True
        return info.key in self._filter

    def is_instrumented_profiling(self):
        stack = self._stack()
        if not stack:
            return self._mode == PHASE_INSTRUMENTED and self._filter is None
        return self.instrumented_for(stack[-1].info)

    def add_counts(self, handle, load_bytes, store_bytes, int_ops, fp_ops):
        if (
            handle is None
            or not handle.open
            or handle.thread_id != threading.get_ident()
        ):
            with self._lock:
                self.misuse_count += 1
            return
        handle.counters.add(load_bytes, store_bytes, int_ops, fp_ops)

    def _fold(self, handle, end_ns):
        handle.open = False
        with self._lock:
            slot = self._records[handle.info]
            slot[0] += 1
            slot[1] += max(end_ns - handle.begin_ns, 0)
            slot[2].merge(handle.counters)

    def loop_end(self, handle):
        end_ns = time.monotonic_ns()
        stack = self._stack()
        if handle is None or not handle.open or handle not in stack:
            with self._lock:
                self.misuse_count += 1
            return
        if stack[-1] is not handle:
            # Out-of-order end: close everything opened above it too.
            with self._lock:
                self.misuse_count += 1
            while stack and stack[-1] is not handle:
                self._fold(stack.pop(), end_ns)
        stack.pop()
        self._fold(handle, end_ns)

    def snapshot_records(self):
        phase = self.phase
        with self._lock:
            return [
                LoopRecord(
                    info,
                    LoopCounters(
                        slot[2].load_bytes,
                        slot[2].store_bytes,
                        slot[2].int_ops,
                        slot[2].fp_ops,
                    ),
                    slot[0],
                    slot[1],
                    phase,
                )
                for info, slot in sorted(
                    self._records.items(),
                    key=lambda kv: (kv[0].filename, kv[0].line, kv[0].func_name),
                )
                if slot[0] >= 1
            ]

    def finalize(self):
        with self._lock:
            if self._finalized:
                return
            self._finalized = True
        report = serialize_report(RunReport(self.phase, self.snapshot_records()))
        try:
            with open(self._out_path, "w", encoding="utf-8") as fh:
                fh.write(report)
        except OSError as exc:
            sys.stderr.write(
                f"mperf-roofline: cannot write report to {self._out_path} "
                f"({exc}); dumping here\n{report}\n"
            )


_registry = _Registry()


def _reset_state():
    """Drop all accumulated state and re-read the environment (test hook)."""
    global _registry
    _registry = _Registry()
    return _registry


def mperf_roofline_internal_notify_loop_begin(info):
    """Open an instrumented region; returns the handle to close it with."""
    return _registry.loop_begin(info)


def mperf_roofline_internal_is_instrumented_profiling():
    """Whether the innermost open region of this thread should count."""
    return _registry.is_instrumented_profiling()


def mperf_roofline_internal_add_counts(handle, load_bytes, store_bytes, int_ops, fp_ops):
    """Accumulate one block's costs on an open handle; misuse is dropped."""
    _registry.add_counts(handle, load_bytes, store_bytes, int_ops, fp_ops)


def mperf_roofline_internal_notify_loop_end(handle):
    """Close a region: adds elapsed time, bumps invocations, merges counters."""
    _registry.loop_end(handle)


def finalize_report():
    """Write the run report now; idempotent, also installed atexit."""
    _registry.finalize()


# --- report (de)serialization -------------------------------------------------


def serialize_report(report):
    obj = {
        "phase": report.phase,
        "records": [
            {
                "file": r.info.filename,
                "line": r.info.line,
                "func": r.info.func_name,
                "invocations": r.invocations,
                "wall_ns": r.wall_time_ns,
                "load_bytes": r.counters.load_bytes,
                "store_bytes": r.counters.store_bytes,
                "int_ops": r.counters.int_ops,
                "fp_ops": r.counters.fp_ops,
            }
            for r in report.records
        ],
    }
    return json.dumps(obj, indent=2) + "\n"


def parse_report(source):
    """Parse a run report from a path or its text; inverse of serialize."""
    if "\n" in source or source.lstrip().startswith("{"):
        text = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    obj = json.loads(text)
    phase = obj["phase"]
    records = [
        LoopRecord(
            LoopInfo(int(r["line"]), r["file"], r["func"]),
            LoopCounters(
                int(r["load_bytes"]),
                int(r["store_bytes"]),
                int(r["int_ops"]),
                int(r["fp_ops"]),
            ),
            int(r["invocations"]),
            int(r["wall_ns"]),
            phase,
        )
        for r in obj["records"]
    ]
    return RunReport(phase, records)
