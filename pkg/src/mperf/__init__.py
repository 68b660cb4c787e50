"""mperf: performance analysis for platforms with unreliable PMU sampling.

Counter-group planning with sampling-capable proxy leaders, flame graphs
and IPC hotspot tables from sample traces, and hardware-agnostic roofline
models built from instrumentation counts via a two-phase run protocol.
"""

__version__ = "0.1.0"

from .platform import (  # noqa: F401
    Capability,
    CpuIdentity,
    EventDescriptor,
    PlatformProfile,
    capability,
    detect_platform,
    identify_platform,
    read_local_identity,
)
from .sampling import (  # noqa: F401
    EventRequest,
    GroupPlan,
    SampleRecord,
    delta_counters,
    next_sample,
    open_session,
    plan_group_schedule,
    plan_groups,
)
from .hotspots import (  # noqa: F401
    FoldedStack,
    HotspotEntry,
    SymbolMap,
    fold_stacks,
    folded_to_text,
    hotspot_table,
    ipc,
    render_flamegraph,
    symbolize,
)
