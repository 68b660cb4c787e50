"""CPU identification and the per-core capability/event database.

Platforms are identified purely from the RISC-V identification CSRs
(mvendorid/marchid/mimpid as exposed through /proc/cpuinfo), never by
probing the OS event list. Unknown hardware degrades to a conservative
counting-only profile instead of failing.
"""

import enum
import json
import os
from dataclasses import dataclass, field
from importlib import resources

from .errors import CpuinfoParseError, MissingField, UnknownPlatform

ENV_PLATFORM_DB = "MPERF_PLATFORM_DB"
ENV_FORCE_PLATFORM = "MPERF_FORCE_PLATFORM"

#: Event names the standard hardware PMU namespace allows.
STANDARD_EVENT_NAMES = frozenset(
    {"cycles", "instructions", "cache-references", "cache-misses", "branch-misses"}
)


class EventKind(str, enum.Enum):
    STANDARD = "standard"
    RAW = "raw"


class ModeScope(str, enum.Enum):
    ALL = "all"
    USER = "user"
    SUPERVISOR = "supervisor"
    MACHINE = "machine"


class RvvVersion(str, enum.Enum):
    NONE = "none"
    V0_7_1 = "0.7.1"
    V1_0 = "1.0"


class OverflowSupport(str, enum.Enum):
    NONE = "none"
    LIMITED = "limited"
    FULL = "full"


class UpstreamLinux(str, enum.Enum):
    NO = "no"
    PARTIAL = "partial"
    YES = "yes"


class Capability(str, enum.Enum):
    """Queryable capability dimensions of a core."""

    OUT_OF_ORDER = "out_of_order"
    RVV_VERSION = "rvv_version"
    OVERFLOW_SUPPORT = "overflow_support"
    UPSTREAM_LINUX = "upstream_linux"


@dataclass(frozen=True)
class CpuIdentity:
    """Raw identification-register values; (vendor_id, arch_id) keys the database."""

    vendor_id: int
    arch_id: int
    impl_id: int = 0

    def __post_init__(self):
        for name in ("vendor_id", "arch_id", "impl_id"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class EventDescriptor:
    name: str
    kind: EventKind
    raw_code: int = 0
    sampling_capable: bool = False
    mode_scope: ModeScope = ModeScope.ALL

    def __post_init__(self):
        if self.kind is EventKind.STANDARD and self.name not in STANDARD_EVENT_NAMES:
            raise ValueError(f"{self.name!r} is not a standard hardware event name")
        if self.kind is EventKind.RAW and self.raw_code == 0:
            raise ValueError(f"raw event {self.name!r} needs an explicit raw_code")


@dataclass(frozen=True)
class PlatformProfile:
    name: str
    out_of_order: bool
    rvv_version: RvvVersion
    overflow_support: OverflowSupport
    upstream_linux: UpstreamLinux
    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.overflow_support is OverflowSupport.NONE:
            bad = [e.name for e in self.events if e.sampling_capable]
            if bad:
                raise ValueError(
                    f"profile {self.name!r} has no overflow support but "
                    f"sampling-capable events {bad}"
                )

    def event(self, name):
        """Look up an event descriptor by name, or None."""
        for e in self.events:
            if e.name == name:
                return e
        return None

    def sampling_events(self):
        return [e for e in self.events if e.sampling_capable]


#: Fallback for hardware the database does not know: counting-only cycles
#: and instructions, nothing sampled.
GENERIC_PROFILE = PlatformProfile(
    name="generic",
    out_of_order=False,
    rvv_version=RvvVersion.NONE,
    overflow_support=OverflowSupport.NONE,
    upstream_linux=UpstreamLinux.NO,
    events=(
        EventDescriptor("cycles", EventKind.STANDARD),
        EventDescriptor("instructions", EventKind.STANDARD),
    ),
)


def _parse_uint(value, ctx):
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value, 16) if value.startswith("0x") else int(value)
        except ValueError:
            pass
    raise CpuinfoParseError(f"{ctx}: expected an unsigned integer, got {value!r}")


def _profile_from_dict(d):
    events = tuple(
        EventDescriptor(
            name=e["name"],
            kind=EventKind(e["kind"]),
            raw_code=int(e.get("raw_code", 0)),
            sampling_capable=bool(e.get("sampling_capable", False)),
            mode_scope=ModeScope(e.get("mode_scope", "all")),
        )
        for e in d["events"]
    )
    return PlatformProfile(
        name=d["name"],
        out_of_order=bool(d["out_of_order"]),
        rvv_version=RvvVersion(d["rvv_version"]),
        overflow_support=OverflowSupport(d["overflow_support"]),
        upstream_linux=UpstreamLinux(d["upstream_linux"]),
        events=events,
    )


class PlatformDatabase:
    """The capability database: an ordered list of profiles with ID keys."""

    def __init__(self, entries):
        # entries: list of (vendor_id, arch_id, impl_id-or-None, profile)
        self._entries = entries
        names = [p.name for _, _, _, p in entries]
        if len(names) != len(set(names)):
            raise ValueError("profile names must be unique")

    @classmethod
    def load(cls, path=None):
        """Load from an explicit path, MPERF_PLATFORM_DB, or the embedded file."""
        if path is None:
            path = os.environ.get(ENV_PLATFORM_DB)
        if path is None:
            text = resources.files(__package__).joinpath("platform_db.json").read_text()
        else:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        raw = json.loads(text)
        entries = []
        for d in raw:
            vendor = _parse_uint(d["vendor_id"], d["name"])
            arch = _parse_uint(d["arch_id"], d["name"])
            impl = d.get("impl_id")
            if impl is not None:
                impl = _parse_uint(impl, d["name"])
            entries.append((vendor, arch, impl, _profile_from_dict(d)))
        return cls(entries)

    def identify(self, identity):
        """Match an identity against the database; total, falls back to generic.

        (vendor_id, arch_id) is the key; an entry carrying an impl_id only
        matches that exact implementation and wins over a wildcard entry.
        """
        exact = None
        wildcard = None
        for vendor, arch, impl, profile in self._entries:
            if vendor != identity.vendor_id or arch != identity.arch_id:
                continue
            if impl is not None:
                if impl == identity.impl_id and exact is None:
                    exact = profile
            elif wildcard is None:
                wildcard = profile
        return exact or wildcard or GENERIC_PROFILE

    def by_name(self, name):
        if name == GENERIC_PROFILE.name:
            return GENERIC_PROFILE
        for _, _, _, profile in self._entries:
            if profile.name == name:
                return profile
        raise UnknownPlatform(
            f"no profile named {name!r}; known: "
            + ", ".join(self.profile_names())
        )

    def profile_names(self):
        return [p.name for _, _, _, p in self._entries] + [GENERIC_PROFILE.name]

    def profiles(self):
        return [p for _, _, _, p in self._entries]


_default_db = None


def default_database():
    global _default_db
    if _default_db is None:
        _default_db = PlatformDatabase.load()
    return _default_db


def identify_platform(identity, db=None):
    """Map identification-register values to a profile; unknown → generic."""
    db = db or default_database()
    return db.identify(identity)


_ID_FIELDS = ("mvendorid", "marchid", "mimpid")


def read_local_identity(proc_info_text):
    """Parse mvendorid/marchid/mimpid out of cpuinfo-style key/value text.

    Multi-core listings repeat the keys; the first occurrence wins (the
    identification registers are per-package on every core we model).
    """
    found = {}
    for line in proc_info_text.splitlines():
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        key = key.strip()
        if key in _ID_FIELDS and key not in found:
            value = value.strip()
            try:
                found[key] = int(value, 16)
            except ValueError:
                raise CpuinfoParseError(f"{key}: {value!r} is not a hex value") from None
    for name in _ID_FIELDS:
        if name not in found:
            raise MissingField(f"cpuinfo text lacks {name!r}")
    return CpuIdentity(found["mvendorid"], found["marchid"], found["mimpid"])


def capability(profile, dimension):
    """Return one capability-table cell for a profile."""
    dimension = Capability(dimension)
    return getattr(profile, dimension.value)


def detect_platform(cpuinfo_text=None, db=None):
    """Resolve the active profile: forced name, else local cpuinfo, else generic.

    MPERF_FORCE_PLATFORM bypasses identification entirely. When no cpuinfo
    text is supplied, /proc/cpuinfo is consulted if readable.
    """
    db = db or default_database()
    forced = os.environ.get(ENV_FORCE_PLATFORM)
    if forced:
        return db.by_name(forced)
    if cpuinfo_text is None:
        try:
            with open("/proc/cpuinfo", "r", encoding="utf-8") as fh:
                cpuinfo_text = fh.read()
        except OSError:
            return GENERIC_PROFILE
    try:
        identity = read_local_identity(cpuinfo_text)
    except (MissingField, CpuinfoParseError):
        return GENERIC_PROFILE
    return db.identify(identity)
