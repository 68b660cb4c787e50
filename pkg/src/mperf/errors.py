"""Exception types shared across the toolkit.

Exit-code mapping used by the CLI: usage/format problems exit 1, platform
capability problems exit 2, child-process/run failures exit 3.
"""


class MperfError(Exception):
    """Base class for all toolkit errors."""


# --- platform -------------------------------------------------------------

class MissingField(MperfError):
    """A required key is absent from cpuinfo-style text."""


class CpuinfoParseError(MperfError):
    """A cpuinfo-style field holds a value that does not parse."""


class UnknownPlatform(MperfError):
    """A platform was named explicitly (MPERF_FORCE_PLATFORM) but is not in the database."""


# --- sampling -------------------------------------------------------------

class EmptyRequest(MperfError):
    """plan_groups was called with no event requests."""


class SamplingUnsupported(MperfError):
    """Sampling was requested but the platform has no sampling-capable counter."""


class GroupBudgetExceeded(MperfError):
    """The request set does not fit a single counter group; use plan_group_schedule."""


class PermissionDenied(MperfError):
    """The OS rejected the perf-event request (paranoia level / privileges)."""


class BackendUnavailable(MperfError):
    """The requested sampling backend cannot be opened."""


class TraceFormatError(MperfError):
    """A replay trace line is not valid; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TidMismatch(MperfError):
    """Counter deltas were requested between samples of different threads."""


# --- hotspots -------------------------------------------------------------

class MetricMissing(MperfError):
    """The requested metric is absent from a sample's counter values."""


class EmptyInput(MperfError):
    """A renderer was handed nothing to draw."""


# --- roofline -------------------------------------------------------------

class ZeroTime(MperfError):
    """A loop record carries no usable wall time; the point is excluded."""


class ZeroTraffic(MperfError):
    """A loop record moved no bytes; arithmetic intensity is undefined."""


class ChildFailed(MperfError):
    """A phase of the two-phase run exited nonzero."""

    def __init__(self, phase, returncode):
        super().__init__(f"{phase} run exited with status {returncode}")
        self.phase = phase
        self.returncode = returncode


class ReportMissing(MperfError):
    """A phase of the two-phase run produced no run report."""

    def __init__(self, phase, path):
        super().__init__(f"no {phase} report at {path} (is the runtime linked in?)")
        self.phase = phase
        self.path = path


class ModelSchemaError(MperfError):
    """A machine-model config file does not match the expected schema."""
