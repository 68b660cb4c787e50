"""Counter-group planning, sampling sessions, and sample decoding.

The planner implements the limited-overflow workaround: on cores whose
standard cycles/instructions counters cannot raise overflow interrupts but
which expose sampling-capable per-mode cycle counters, one of those is
installed as a proxy group leader and the requested events ride along as
counting members read on every leader overflow.

Sessions come in two flavors: a live one wrapping the OS perf-event
interface (see perf_live) and a deterministic replay one reading the JSONL
trace format, which is also what ``mperf record`` writes:

    {"ts":u64,"pid":i32,"tid":i32,"pc":u64,"stack":[u64,...],
     "counters":{"cycles":u64,...},"syms":{"0x<addr>":"name",...}?}

``stack`` is the call chain, leaf first. Counter values are cumulative
group reads; attribution works on deltas (see delta_counters).
"""

import json
from dataclasses import dataclass, field

from .errors import (
    BackendUnavailable,
    EmptyRequest,
    GroupBudgetExceeded,
    SamplingUnsupported,
    TidMismatch,
    TraceFormatError,
)
from .platform import ModeScope

DEFAULT_SAMPLE_FREQ_HZ = 997  # prime, avoids lockstep with periodic workloads
DEFAULT_COUNTER_BUDGET = 8

#: Proxy-leader preference: application profiling dominates, so the
#: user-mode counter wins when the platform offers a choice.
_PROXY_SCOPE_ORDER = (ModeScope.USER, ModeScope.SUPERVISOR, ModeScope.MACHINE, ModeScope.ALL)


@dataclass(frozen=True)
class EventRequest:
    event: object  # EventDescriptor
    want_sampling: bool = False
    sample_frequency_hz: int = DEFAULT_SAMPLE_FREQ_HZ

    def __post_init__(self):
        if self.want_sampling and not 1 <= self.sample_frequency_hz <= 100_000:
            raise ValueError("sample_frequency_hz must be in [1, 100000]")


@dataclass(frozen=True)
class GroupPlan:
    leader: object  # EventDescriptor
    members: tuple
    sample_frequency_hz: int
    leader_is_proxy: bool

    def __post_init__(self):
        if any(m.name == self.leader.name for m in self.members):
            raise ValueError("members must not repeat the leader")

    @property
    def size(self):
        return 1 + len(self.members)

    def event_names(self):
        return [self.leader.name] + [m.name for m in self.members]

    def describe(self):
        tag = " (proxy)" if self.leader_is_proxy else ""
        return f"leader: {self.leader.name}{tag}; members: " + (
            ", ".join(m.name for m in self.members) or "-"
        )


@dataclass
class SampleRecord:
    timestamp_ns: int
    pid: int
    tid: int
    pc: int
    callchain: tuple  # addresses, leaf first
    counter_values: dict  # event name -> cumulative value
    syms: dict = None  # optional addr -> name carried by the trace line

    def __post_init__(self):
        if not self.callchain:
            raise ValueError("callchain must be non-empty")


def _proxy_leader(profile):
    candidates = profile.sampling_events()
    for scope in _PROXY_SCOPE_ORDER:
        for event in candidates:
            if event.mode_scope is scope:
                return event
    return None


def _plan_one_group(profile, requests, want_sampling, freq):
    events = [r.event for r in requests]
    if want_sampling:
        leader = next((e for e in events if e.sampling_capable), None)
        if leader is not None:
            members = tuple(e for e in events if e.name != leader.name)
            return GroupPlan(leader, members, freq, leader_is_proxy=False)
        proxy = _proxy_leader(profile)
        if proxy is None:
            raise SamplingUnsupported(
                f"platform {profile.name!r} has no sampling-capable counter "
                f"(overflow interrupt support: {profile.overflow_support.value})"
            )
        return GroupPlan(proxy, tuple(events), freq, leader_is_proxy=True)
    # Counting-only group: the first requested event leads, nothing samples.
    return GroupPlan(events[0], tuple(events[1:]), freq, leader_is_proxy=False)


def _checked_requests(requests):
    requests = list(requests)
    if not requests:
        raise EmptyRequest("at least one event request is required")
    freqs = {r.sample_frequency_hz for r in requests if r.want_sampling}
    if len(freqs) > 1:
        raise ValueError(f"sampling requests disagree on frequency: {sorted(freqs)}")
    freq = freqs.pop() if freqs else DEFAULT_SAMPLE_FREQ_HZ
    seen = set()
    deduped = []
    for r in requests:
        if r.event.name not in seen:
            seen.add(r.event.name)
            deduped.append(r)
    return deduped, any(r.want_sampling for r in requests), freq


def plan_group_schedule(profile, requests, counter_budget=DEFAULT_COUNTER_BUDGET):
    """Plan one or more counter groups, splitting over-budget request sets.

    Requests beyond one group's capacity are dealt round-robin, in request
    order, into the minimum number of groups; each group gets its own
    leader by the same rules as plan_groups. Groups are intended to be
    time-multiplexed by the session layer.
    """
    requests, want_sampling, freq = _checked_requests(requests)
    # A proxy leader occupies a counter of its own; requested leaders don't.
    needs_proxy = want_sampling and not any(r.event.sampling_capable for r in requests)
    if len(requests) + (1 if needs_proxy else 0) <= counter_budget:
        return [_plan_one_group(profile, requests, want_sampling, freq)]
    # Splitting can strand a bucket without a sampling-capable event, which
    # then needs a proxy slot, so reserve one whenever sampling is on.
    capacity = counter_budget - 1 if want_sampling else counter_budget
    n_groups = -(-len(requests) // capacity)
    buckets = [requests[i::n_groups] for i in range(n_groups)]
    return [_plan_one_group(profile, bucket, want_sampling, freq) for bucket in buckets]


def plan_groups(profile, requests, counter_budget=DEFAULT_COUNTER_BUDGET):
    """Plan a single counter group for the requested events.

    Leader selection: a requested sampling-capable event wins; otherwise a
    platform proxy counter leads (user-mode preferred) and every requested
    event becomes a member. Member order preserves request order.
    """
    plans = plan_group_schedule(profile, requests, counter_budget)
    if len(plans) > 1:
        raise GroupBudgetExceeded(
            f"request set needs {sum(p.size for p in plans)} counters, over the "
            f"budget of {counter_budget}; plan_group_schedule splits this into "
            f"{len(plans)} multiplexed groups"
        )
    return plans[0]


# --- trace (de)serialization -------------------------------------------------


class _CorruptRecord(Exception):
    """Internal: a JSON-valid line is not a usable sample record."""


def serialize_record(rec):
    """Canonical one-line JSON form of a sample; inverse of parse under replay."""
    obj = {
        "ts": rec.timestamp_ns,
        "pid": rec.pid,
        "tid": rec.tid,
        "pc": rec.pc,
        "stack": list(rec.callchain),
        "counters": rec.counter_values,
    }
    if rec.syms:
        obj["syms"] = {f"0x{addr:x}": name for addr, name in rec.syms.items()}
    return json.dumps(obj, separators=(",", ":"))


def _parse_record_obj(obj, required_counters=None):
    if not isinstance(obj, dict):
        raise _CorruptRecord("record is not an object")
    try:
        ts = obj["ts"]
        pid = obj["pid"]
        tid = obj["tid"]
        pc = obj["pc"]
        stack = obj["stack"]
        counters = obj["counters"]
    except KeyError as exc:
        raise _CorruptRecord(f"missing key {exc.args[0]!r}") from None
    if not (isinstance(ts, int) and ts >= 0 and isinstance(pc, int)):
        raise _CorruptRecord("ts/pc must be unsigned integers")
    if not isinstance(stack, list) or not stack or not all(
        isinstance(a, int) for a in stack
    ):
        raise _CorruptRecord("stack must be a non-empty address list")
    if not isinstance(counters, dict) or not counters or not all(
        isinstance(v, int) and v >= 0 for v in counters.values()
    ):
        raise _CorruptRecord("counters must map names to unsigned integers")
    if required_counters:
        missing = [n for n in required_counters if n not in counters]
        if missing:
            raise _CorruptRecord(f"missing counter value for {missing[0]!r}")
    syms = None
    if "syms" in obj:
        raw = obj["syms"]
        if not isinstance(raw, dict):
            raise _CorruptRecord("syms must be an object")
        try:
            syms = {int(addr, 16): str(name) for addr, name in raw.items()}
        except ValueError:
            raise _CorruptRecord("syms keys must be hex addresses") from None
    return SampleRecord(ts, pid, tid, pc, tuple(stack), dict(counters), syms)


# --- sessions ------------------------------------------------------------------


class ReplaySession:
    """Deterministic session over a JSONL trace file.

    The whole file is validated at open: lines that are not JSON raise
    TraceFormatError (with the line number), JSON-valid lines that are not
    usable records are skipped and counted (``corrupt_records``). Records
    are emitted in file order; a non-increasing timestamp within a tid
    increments ``order_warnings`` instead of reordering anything.
    """

    def __init__(self, path, plan=None):
        self.path = path
        self.plan = plan
        self.records = []
        self.corrupt_records = []  # (line_no, reason)
        self.order_warnings = 0
        required = plan.event_names() if plan is not None else None
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise BackendUnavailable(f"cannot read trace {path}: {exc}") from None
        last_ts = {}
        for line_no, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(line_no, f"invalid JSON ({exc.msg})") from None
            try:
                rec = _parse_record_obj(obj, required)
            except _CorruptRecord as exc:
                self.corrupt_records.append((line_no, str(exc)))
                continue
            if rec.tid in last_ts and rec.timestamp_ns <= last_ts[rec.tid]:
                self.order_warnings += 1
            last_ts[rec.tid] = rec.timestamp_ns
            self.records.append(rec)
        self._pos = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return self

    def __next__(self):
        rec = self.next_sample()
        if rec is None:
            raise StopIteration
        return rec

    def next_sample(self):
        if self._pos >= len(self.records):
            return None
        rec = self.records[self._pos]
        self._pos += 1
        return rec

    def close(self):
        self._pos = len(self.records)

    def symbol_entries(self):
        """All addr -> name entries carried by the trace, first writer wins."""
        merged = {}
        for rec in self.records:
            if rec.syms:
                for addr, name in rec.syms.items():
                    merged.setdefault(addr, name)
        return merged


def open_session(plan, target=None, *, replay=None):
    """Open a sampling session: a replay of a trace file, or a live run.

    ``target`` is an argv list to launch or a pid to attach to (live mode
    only). Live sessions require OS perf-event support and a sampling plan.
    """
    if replay is not None:
        return ReplaySession(replay, plan=plan)
    from . import perf_live

    return perf_live.LiveSession(plan, target)


def next_sample(session):
    """The next decoded sample, or None at end of stream."""
    return session.next_sample()


class CounterDeltas(dict):
    """Per-event deltas; ``reset_events`` names counters that went backwards."""

    def __init__(self, values, reset_events):
        super().__init__(values)
        self.reset_events = frozenset(reset_events)

    @property
    def reset(self):
        return bool(self.reset_events)


def delta_counters(prev, cur):
    """Cumulative-to-delta conversion between two samples of one thread.

    A counter that moved backwards (reset/wrap) yields 0 and is flagged in
    ``reset_events`` rather than guessing the counter width.
    """
    if prev.tid != cur.tid:
        raise TidMismatch(f"samples belong to tids {prev.tid} and {cur.tid}")
    values = {}
    resets = []
    for name, cur_value in cur.counter_values.items():
        prev_value = prev.counter_values.get(name, 0)
        if cur_value >= prev_value:
            values[name] = cur_value - prev_value
        else:
            values[name] = 0
            resets.append(name)
    return CounterDeltas(values, resets)
