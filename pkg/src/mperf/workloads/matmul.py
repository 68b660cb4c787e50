"""Hand-instrumented tiled matmul: python -m mperf.workloads.matmul.

This mirrors what a compiler pass would emit around an outlined loop nest:
the call site notifies region begin, dispatches on the process-wide
instrumentation mode between a plain clone and a counting clone, and
notifies region end. The counting clone charges each basic block's cost to
the open handle as it executes — 4 bytes per scalar f32 load/store, two fp
ops per multiply-add, one int op per loop-latch increment.

Engines: "blocks" issues one add_counts call per executed block (faithful
to emitted code, slow for large n); "kernel" runs the jitted counted loop
and folds the identical totals in a single call.
"""

import argparse
import hashlib
import sys

import numpy as np

from .. import kernels
from ..roofline.runtime import (
    LoopInfo,
    mperf_roofline_internal_add_counts as add_counts,
    mperf_roofline_internal_is_instrumented_profiling as is_instrumented,
    mperf_roofline_internal_notify_loop_begin as loop_begin,
    mperf_roofline_internal_notify_loop_end as loop_end,
)

LOOP_INFO = LoopInfo(line=42, filename="matmul.py", func_name="matmul_tiled")


def make_operands(n, seed_offset=0):
    """Deterministic f32 operands in a tame range; flat row-major layout."""
    idx = np.arange(n * n, dtype=np.int64) + seed_offset
    a = (((idx * 7 + 3) % 13).astype(np.float32) - 6.0) / 8.0
    b = (((idx * 5 + 1) % 11).astype(np.float32) - 5.0) / 8.0
    c = np.zeros(n * n, dtype=np.float32)
    return a.astype(np.float32), b.astype(np.float32), c


def _matmul_outlined(a, b, c, n, tile, engine):
    if engine == "kernel":
        kernels.matmul_tiled(a, b, c, n, tile)
    else:
        kernels._matmul_tiled_py(a, b, c, n, tile)


def _matmul_instrumented(a, b, c, n, tile, handle, engine):
    if engine == "kernel":
        lb, sb, io, fo = kernels.matmul_tiled_counted(a, b, c, n, tile)
        add_counts(handle, int(lb), int(sb), int(io), int(fo))
        return
    f32 = np.float32
    ii = 0
    while ii < n:
        jj = 0
        while jj < n:
            kk = 0
            while kk < n:
                i = ii
                while i < ii + tile and i < n:
                    j = jj
                    while j < jj + tile and j < n:
                        s = f32(c[i * n + j])
                        add_counts(handle, 4, 0, 0, 0)
                        k = kk
                        while k < kk + tile and k < n:
                            s = f32(s + f32(a[i * n + k] * b[k * n + j]))
                            add_counts(handle, 8, 0, 1, 2)
                            k += 1
                        c[i * n + j] = s
                        add_counts(handle, 0, 4, 1, 0)
                        j += 1
                    add_counts(handle, 0, 0, 1, 0)
                    i += 1
                add_counts(handle, 0, 0, 1, 0)
                kk += tile
            add_counts(handle, 0, 0, 1, 0)
            jj += tile
        add_counts(handle, 0, 0, 1, 0)
        ii += tile


def run_region(a, b, c, n, tile, engine="blocks"):
    """The rewritten call site: begin, dispatch on mode, end."""
    handle = loop_begin(LOOP_INFO)
    if is_instrumented():
        _matmul_instrumented(a, b, c, n, tile, handle, engine)
    else:
        _matmul_outlined(a, b, c, n, tile, engine)
    loop_end(handle)


def main(argv=None):
    parser = argparse.ArgumentParser(description="instrumented tiled matmul workload")
    parser.add_argument("--n", type=int, default=16, help="matrix dimension")
    parser.add_argument("--tile", type=int, default=4, help="tile size (must divide n)")
    parser.add_argument("--repeat", type=int, default=1, help="region invocations")
    parser.add_argument("--engine", choices=("blocks", "kernel"), default="blocks")
    parser.add_argument(
        "--verify", action="store_true", help="print a checksum of the result"
    )
    args = parser.parse_args(argv)
    if args.n <= 0 or args.tile <= 0 or args.n % args.tile != 0:
        parser.error("need n > 0, tile > 0, tile | n")
    a, b, c = make_operands(args.n)
    for _ in range(args.repeat):
        c[:] = 0
        run_region(a, b, c, args.n, args.tile, args.engine)
    if args.verify:
        print(hashlib.sha256(c.tobytes()).hexdigest())
    return 0


if __name__ == "__main__":
    sys.exit(main())
