"""Live sampling backend over the Linux perf-event syscall interface.

One group is opened per session: the plan's leader samples at the
requested frequency with PERF_SAMPLE_READ, so every overflow delivers an
atomic group read of all member counters — this is the mechanism the
proxy-leader workaround rides on. Decoding turns ring-buffer records into
the same SampleRecord shape the replay backend produces.

The concurrent-sampling behavior is platform-conditional, so the first
decoded sample is checked for a complete group read; an incomplete one
downgrades to a session warning rather than an error.
"""

import ctypes
import fcntl
import mmap
import os
import platform as _host_platform
import select
import signal
import struct

from .errors import BackendUnavailable, PermissionDenied
from .platform import EventKind, ModeScope
from .sampling import SampleRecord

PERF_TYPE_HARDWARE = 0
PERF_TYPE_RAW = 4

_HW_CONFIG = {
    "cycles": 0,
    "instructions": 1,
    "cache-references": 2,
    "cache-misses": 3,
    "branch-misses": 5,
}

PERF_SAMPLE_IP = 1 << 0
PERF_SAMPLE_TID = 1 << 1
PERF_SAMPLE_TIME = 1 << 2
PERF_SAMPLE_READ = 1 << 4
PERF_SAMPLE_CALLCHAIN = 1 << 5

PERF_FORMAT_ID = 1 << 2
PERF_FORMAT_GROUP = 1 << 3

PERF_RECORD_SAMPLE = 9

PERF_EVENT_IOC_ENABLE = 0x2400
PERF_EVENT_IOC_ID = 0x80082407
PERF_IOC_FLAG_GROUP = 1
PERF_FLAG_FD_CLOEXEC = 1 << 3

# attr.flags bit positions (perf_event_attr bitfield block)
_FLAG_DISABLED = 1 << 0
_FLAG_EXCLUDE_USER = 1 << 4
_FLAG_EXCLUDE_KERNEL = 1 << 5
_FLAG_EXCLUDE_HV = 1 << 6
_FLAG_FREQ = 1 << 10
_FLAG_ENABLE_ON_EXEC = 1 << 12

_SYSCALL_NR = {
    "x86_64": 298,
    "aarch64": 241,
    "riscv64": 241,
    "arm64": 241,
}

_MMAP_DATA_PAGES = 64  # power of two; plus one control page

# perf_event_mmap_page field offsets (stable ABI)
_OFF_DATA_HEAD = 1024
_OFF_DATA_TAIL = 1032

# Call-chain context markers (PERF_CONTEXT_*) live in the top address range.
_CONTEXT_SENTINEL = 1 << 62


class _PerfEventAttr(ctypes.Structure):
    _fields_ = [
        ("type", ctypes.c_uint32),
        ("size", ctypes.c_uint32),
        ("config", ctypes.c_uint64),
        ("sample_freq", ctypes.c_uint64),
        ("sample_type", ctypes.c_uint64),
        ("read_format", ctypes.c_uint64),
        ("flags", ctypes.c_uint64),
        ("wakeup_events", ctypes.c_uint32),
        ("bp_type", ctypes.c_uint32),
        ("config1", ctypes.c_uint64),
        ("config2", ctypes.c_uint64),
        ("branch_sample_type", ctypes.c_uint64),
        ("sample_regs_user", ctypes.c_uint64),
        ("sample_stack_user", ctypes.c_uint32),
        ("clockid", ctypes.c_int32),
        ("sample_regs_intr", ctypes.c_uint64),
        ("aux_watermark", ctypes.c_uint32),
        ("sample_max_stack", ctypes.c_uint16),
        ("__reserved_2", ctypes.c_uint16),
    ]


def _syscall_nr():
    nr = _SYSCALL_NR.get(_host_platform.machine())
    if nr is None:
        raise BackendUnavailable(
            f"no perf_event_open syscall number known for {_host_platform.machine()}"
        )
    return nr


def _perf_event_open(attr, pid, cpu, group_fd, flags):
    libc = ctypes.CDLL(None, use_errno=True)
    fd = libc.syscall(_syscall_nr(), ctypes.byref(attr), pid, cpu, group_fd, flags)
    if fd < 0:
        err = ctypes.get_errno()
        if err in (1, 13):  # EPERM, EACCES
            raise PermissionDenied(
                "perf_event_open rejected; check /proc/sys/kernel/perf_event_paranoid"
            )
        raise BackendUnavailable(f"perf_event_open failed: {os.strerror(err)}")
    return fd


def _build_attr(event, plan, is_leader, for_exec_child):
    attr = _PerfEventAttr()
    attr.size = ctypes.sizeof(attr)
    if event.kind is EventKind.RAW:
        attr.type = PERF_TYPE_RAW
        attr.config = event.raw_code
    else:
        attr.type = PERF_TYPE_HARDWARE
        try:
            attr.config = _HW_CONFIG[event.name]
        except KeyError:
            raise BackendUnavailable(f"no perf encoding for event {event.name!r}")
    attr.read_format = PERF_FORMAT_GROUP | PERF_FORMAT_ID
    flags = 0
    if event.mode_scope is ModeScope.USER:
        flags |= _FLAG_EXCLUDE_KERNEL | _FLAG_EXCLUDE_HV
    elif event.mode_scope is ModeScope.SUPERVISOR:
        flags |= _FLAG_EXCLUDE_USER | _FLAG_EXCLUDE_HV
    if is_leader:
        attr.sample_freq = plan.sample_frequency_hz
        attr.sample_type = (
            PERF_SAMPLE_IP
            | PERF_SAMPLE_TID
            | PERF_SAMPLE_TIME
            | PERF_SAMPLE_READ
            | PERF_SAMPLE_CALLCHAIN
        )
        flags |= _FLAG_FREQ
        if for_exec_child:
            flags |= _FLAG_DISABLED | _FLAG_ENABLE_ON_EXEC
    attr.flags = flags
    return attr


def run_counted(plan, argv):
    """Counting-only run: launch argv with the plan's group and read totals.

    No sampling is configured; the group leader is read once after the
    child exits, giving whole-run totals per event name.
    """
    pid = os.fork()
    if pid == 0:
        os.kill(os.getpid(), signal.SIGSTOP)
        try:
            os.execvp(argv[0], argv)
        finally:
            os._exit(127)
    os.waitpid(pid, os.WUNTRACED)

    fds = []
    id_to_name = {}
    try:
        events = [(plan.leader, True)] + [(m, False) for m in plan.members]
        leader_fd = -1
        for event, is_leader in events:
            attr = _PerfEventAttr()
            attr.size = ctypes.sizeof(attr)
            if event.kind is EventKind.RAW:
                attr.type = PERF_TYPE_RAW
                attr.config = event.raw_code
            else:
                attr.type = PERF_TYPE_HARDWARE
                attr.config = _HW_CONFIG.get(event.name, 0)
            attr.read_format = PERF_FORMAT_GROUP | PERF_FORMAT_ID
            if is_leader:
                attr.flags = _FLAG_DISABLED | _FLAG_ENABLE_ON_EXEC
            fd = _perf_event_open(
                attr, pid, -1, leader_fd, PERF_FLAG_FD_CLOEXEC
            )
            fds.append(fd)
            if is_leader:
                leader_fd = fd
            buf = ctypes.c_uint64()
            fcntl.ioctl(fd, PERF_EVENT_IOC_ID, buf)
            id_to_name[buf.value] = event.name
    except (PermissionDenied, BackendUnavailable):
        os.kill(pid, signal.SIGKILL)
        os.waitpid(pid, 0)
        for fd in fds:
            os.close(fd)
        raise

    os.kill(pid, signal.SIGCONT)
    _, status = os.waitpid(pid, 0)
    data = os.read(fds[0], 8 + 16 * len(fds))
    (nr,) = struct.unpack_from("<Q", data, 0)
    totals = {}
    for i in range(nr):
        value, ident = struct.unpack_from("<QQ", data, 8 + 16 * i)
        name = id_to_name.get(ident)
        if name is not None:
            totals[name] = value
    for fd in fds:
        os.close(fd)
    returncode = -os.WTERMSIG(status) if os.WIFSIGNALED(status) else os.WEXITSTATUS(status)
    return totals, returncode


class LiveSession:
    """Sampling session against a freshly launched command or an existing pid."""

    def __init__(self, plan, target):
        self.plan = plan
        self.corrupt_records = []
        self.order_warnings = 0
        self.group_read_verified = None  # set once the first sample decodes
        self._buffer = []
        self._done = False
        self._child = None
        self._fds = []
        self._ring = None

        if isinstance(target, int):
            if not os.path.isdir(f"/proc/{target}"):
                raise BackendUnavailable(f"no such process: pid {target}")
            self._target_pid = target
        elif target:
            self._target_pid = self._spawn_stopped(list(target))
            self._child = self._target_pid
        else:
            raise BackendUnavailable("live session needs a command or a pid")

        self._open_group(self._target_pid)
        if self._child is not None:
            os.kill(self._child, signal.SIGCONT)  # counters enable on exec
        else:
            fcntl.ioctl(self._fds[0], PERF_EVENT_IOC_ENABLE, PERF_IOC_FLAG_GROUP)

    def _spawn_stopped(self, argv):
        # The child stops itself before exec so counters attach first;
        # enable_on_exec then starts them exactly at program entry.
        pid = os.fork()
        if pid == 0:
            os.kill(os.getpid(), signal.SIGSTOP)
            try:
                os.execvp(argv[0], argv)
            finally:
                os._exit(127)
        os.waitpid(pid, os.WUNTRACED)
        return pid

    def _open_group(self, pid):
        for_exec = self._child is not None
        leader_attr = _build_attr(self.plan.leader, self.plan, True, for_exec)
        try:
            leader_fd = _perf_event_open(leader_attr, pid, -1, -1, PERF_FLAG_FD_CLOEXEC)
        except (PermissionDenied, BackendUnavailable):
            self.close()
            raise
        self._fds.append(leader_fd)
        self._id_to_name = {self._event_id(leader_fd): self.plan.leader.name}
        for member in self.plan.members:
            attr = _build_attr(member, self.plan, False, for_exec)
            try:
                fd = _perf_event_open(attr, pid, -1, leader_fd, PERF_FLAG_FD_CLOEXEC)
            except (PermissionDenied, BackendUnavailable):
                self.close()
                raise
            self._fds.append(fd)
            self._id_to_name[self._event_id(fd)] = member.name
        size = (1 + _MMAP_DATA_PAGES) * mmap.PAGESIZE
        try:
            self._ring = mmap.mmap(leader_fd, size)
        except OSError as exc:
            self.close()
            raise BackendUnavailable(f"cannot map perf ring buffer: {exc}")
        self._data_size = _MMAP_DATA_PAGES * mmap.PAGESIZE

    def _event_id(self, fd):
        buf = ctypes.c_uint64()
        fcntl.ioctl(fd, PERF_EVENT_IOC_ID, buf)
        return buf.value

    # --- ring buffer decoding ---

    def _head_tail(self):
        head = struct.unpack_from("<Q", self._ring, _OFF_DATA_HEAD)[0]
        tail = struct.unpack_from("<Q", self._ring, _OFF_DATA_TAIL)[0]
        return head, tail

    def _read_bytes(self, offset, length):
        base = mmap.PAGESIZE
        start = offset % self._data_size
        end = start + length
        if end <= self._data_size:
            return self._ring[base + start : base + end]
        first = self._ring[base + start : base + self._data_size]
        return first + self._ring[base : base + (end - self._data_size)]

    def _drain_ring(self):
        if self._ring is None:
            return
        head, tail = self._head_tail()
        while tail + 8 <= head:
            rtype, _misc, size = struct.unpack("<IHH", self._read_bytes(tail, 8))
            if size < 8 or tail + size > head:
                tail = head
                break
            if rtype == PERF_RECORD_SAMPLE:
                rec = self._decode_sample(self._read_bytes(tail + 8, size - 8))
                if rec is not None:
                    self._buffer.append(rec)
            tail += size
        struct.pack_into("<Q", self._ring, _OFF_DATA_TAIL, tail)

    def _decode_sample(self, body):
        try:
            off = 0
            (ip,) = struct.unpack_from("<Q", body, off)
            off += 8
            pid, tid = struct.unpack_from("<ii", body, off)
            off += 8
            (ts,) = struct.unpack_from("<Q", body, off)
            off += 8
            (nr,) = struct.unpack_from("<Q", body, off)
            off += 8
            chain = struct.unpack_from(f"<{nr}Q", body, off)
            off += 8 * nr
            (gnr,) = struct.unpack_from("<Q", body, off)
            off += 8
            counters = {}
            for _ in range(gnr):
                value, ident = struct.unpack_from("<QQ", body, off)
                off += 16
                name = self._id_to_name.get(ident)
                if name is not None:
                    counters[name] = value
        except struct.error:
            self.corrupt_records.append((len(self._buffer) + 1, "short sample record"))
            return None
        if self.group_read_verified is None:
            self.group_read_verified = set(counters) >= set(self.plan.event_names())
        missing = [n for n in self.plan.event_names() if n not in counters]
        if missing:
            self.corrupt_records.append(
                (len(self._buffer) + 1, f"missing counter value for {missing[0]!r}")
            )
            return None
        user_chain = tuple(a for a in chain if a < _CONTEXT_SENTINEL) or (ip,)
        return SampleRecord(ts, pid, tid, ip, user_chain, counters)

    def _target_alive(self):
        if self._child is not None:
            done_pid, _ = os.waitpid(self._child, os.WNOHANG)
            if done_pid == self._child:
                self._child = None
                return False
            return True
        return os.path.isdir(f"/proc/{self._target_pid}")

    def next_sample(self):
        while not self._buffer and not self._done:
            self._drain_ring()
            if self._buffer:
                break
            if not self._target_alive():
                self._drain_ring()
                self._done = True
                break
            select.select([self._fds[0]], [], [], 0.05)
        if self._buffer:
            return self._buffer.pop(0)
        return None

    def __iter__(self):
        return self

    def __next__(self):
        rec = self.next_sample()
        if rec is None:
            raise StopIteration
        return rec

    def close(self):
        for fd in self._fds:
            try:
                os.close(fd)
            except OSError:
                pass
        self._fds = []
        if self._ring is not None:
            try:
                self._ring.close()
            except (OSError, ValueError):
                pass
            self._ring = None
        if self._child is not None:
            try:
                os.kill(self._child, signal.SIGKILL)
                os.waitpid(self._child, 0)
            except OSError:
                pass
            self._child = None
