"""Roofline construction from compiler-style instrumentation counts."""

from .runtime import (  # noqa: F401
    LoopCounters,
    LoopInfo,
    LoopRecord,
    RunReport,
    finalize_report,
    mperf_roofline_internal_add_counts,
    mperf_roofline_internal_is_instrumented_profiling,
    mperf_roofline_internal_notify_loop_begin,
    mperf_roofline_internal_notify_loop_end,
    parse_report,
)
from .analysis import (  # noqa: F401
    BoundClass,
    BoundKind,
    MachineModel,
    RooflinePoint,
    bandwidth_from_bytes_per_cycle,
    classify,
    correlate,
    derive_point,
    render_roofline,
    theoretical_compute_peak,
    two_phase_run,
)
