"""Shared builders for synthetic sample streams and SVG scraping."""

import random
import re

from mperf.sampling import SampleRecord

_FRAME_RE = re.compile(
    r"<g>\n<title>([^<]*) \((\d+), ([0-9.]+)%\)</title>\n"
    r'<rect x="(\d+)" y="(\d+)" width="(\d+)"'
)


def parse_frames(doc):
    """(name, weight, pct, x, y, width) for every frame rect in a flame SVG."""
    return [
        (m[0], int(m[1]), float(m[2]), int(m[3]), int(m[4]), int(m[5]))
        for m in _FRAME_RE.findall(doc)
    ]

# Synthetic address layout: eight functions, 0x100 bytes each.
FUNC_ADDRS = {0x1000 + i * 0x100: f"func_{chr(ord('a') + i)}" for i in range(8)}
INTERVALS = sorted((addr, addr + 0x100, name) for addr, name in FUNC_ADDRS.items())


def make_record(ts, tid, chain, counters, pid=77, syms=None):
    return SampleRecord(
        timestamp_ns=ts,
        pid=pid,
        tid=tid,
        pc=chain[0],
        callchain=tuple(chain),
        counter_values=dict(counters),
        syms=syms,
    )


def synth_samples(seed, n_samples, n_tids=3, metrics=("cycles", "instructions"),
                  reset_rate=0.0, max_depth=5):
    """Deterministic random sample stream with cumulative counters per tid."""
    rng = random.Random(seed)
    addrs = list(FUNC_ADDRS)
    cum = {tid: {m: 0 for m in metrics} for tid in range(1, n_tids + 1)}
    ts = 1_000_000
    samples = []
    for _ in range(n_samples):
        tid = rng.randint(1, n_tids)
        depth = rng.randint(1, max_depth)
        chain = [rng.choice(addrs) for _ in range(depth)]
        counters = {}
        for m in metrics:
            if reset_rate and rng.random() < reset_rate:
                cum[tid][m] = rng.randint(0, 50)  # counter reset
            else:
                cum[tid][m] += rng.randint(0, 10_000)
            counters[m] = cum[tid][m]
        ts += rng.randint(1, 2_000_000)
        samples.append(make_record(ts, tid, chain, counters))
    return samples
