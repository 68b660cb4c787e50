"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

Every kernel exists twice: a ``_jit`` variant compiled with numba and a
``_np`` variant using plain numpy. The module-level names dispatch to the
jitted variant unless MPERF_DISABLE_NUMBA=1 is set (or numba is missing),
in which case the numpy path is used. Both variants are exact-integer
equivalent; ``benchmarks/bench_kernels.py`` compares their throughput.

Counter values ride as uint64 throughout; deltas are clamped at zero on
wraparound so subtraction never underflows.
"""

import os

import numpy as np

NUMBA_DISABLED = os.environ.get("MPERF_DISABLE_NUMBA", "") == "1"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED

# Below this many samples the plain-Python callers skip the array path
# entirely; JIT warm-up would dominate.
FOLD_KERNEL_THRESHOLD = 8192


# --- cumulative-counter deltas ---------------------------------------------

def _run_deltas_py(group_ids, values, n_groups):
    deltas = np.zeros(len(values), dtype=np.uint64)
    last = np.zeros(n_groups, dtype=np.uint64)
    seen = np.zeros(n_groups, dtype=np.bool_)
    for i in range(len(values)):
        g = group_ids[i]
        v = values[i]
        if seen[g]:
            prev = last[g]
            deltas[i] = v - prev if v >= prev else np.uint64(0)
        else:
            deltas[i] = v
            seen[g] = True
        last[g] = v
    return deltas


def _run_deltas_np(group_ids, values, n_groups):
    # Stable sort groups the stream per id while keeping stream order
    # inside each group, so a shifted compare finds each predecessor.
    order = np.argsort(group_ids, kind="stable")
    gv = group_ids[order]
    vv = values[order]
    prev = np.empty_like(vv)
    prev[1:] = vv[:-1]
    prev[0] = 0
    first = np.empty(len(gv), dtype=np.bool_)
    first[0] = True
    first[1:] = gv[1:] != gv[:-1]
    prev[first] = 0
    d = np.where(vv >= prev, vv - prev, np.uint64(0))
    deltas = np.empty_like(d)
    deltas[order] = d
    return deltas


# --- per-stack weight accumulation ------------------------------------------

def _accumulate_weights_np(stack_ids, deltas, n_stacks):
    out = np.zeros(n_stacks, dtype=np.uint64)
    np.add.at(out, stack_ids, deltas)
    return out


# --- bulk interval symbolization ---------------------------------------------

def _symbolize_indices_np(addrs, starts, ends):
    idx = np.searchsorted(starts, addrs, side="right").astype(np.int64) - 1
    ok = (idx >= 0) & (addrs < ends[np.maximum(idx, 0)])
    return np.where(ok, idx, np.int64(-1))


# --- tiled matmul (uncounted; the baseline clone of the workload) -------------

def _matmul_tiled_py(a, b, c, n, tile):
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
                        k = kk
                        while k < kk + tile and k < n:
                            s = f32(s + f32(a[i * n + k] * b[k * n + j]))
                            k += 1
                        c[i * n + j] = s
                        j += 1
                    i += 1
                kk += tile
            jj += tile
        ii += tile


# --- counted tiled matmul -----------------------------------------------------

def _matmul_tiled_counted_py(a, b, c, n, tile):
    """Sequential f32 tiled matmul that tallies per-block costs as it runs.

    Accounting mirrors the instrumented workload: 4 bytes per scalar float
    load/store, 2 fp ops per multiply-add, 1 int op per loop-latch
    increment. Index arithmetic is address computation and not counted.
    """
    load_bytes = 0
    store_bytes = 0
    int_ops = 0
    fp_ops = 0
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
                        load_bytes += 4
                        k = kk
                        while k < kk + tile and k < n:
                            s = f32(s + f32(a[i * n + k] * b[k * n + j]))
                            load_bytes += 8
                            fp_ops += 2
                            k += 1
                            int_ops += 1
                        c[i * n + j] = s
                        store_bytes += 4
                        j += 1
                        int_ops += 1
                    i += 1
                    int_ops += 1
                kk += tile
                int_ops += 1
            jj += tile
            int_ops += 1
        ii += tile
        int_ops += 1
    return load_bytes, store_bytes, int_ops, fp_ops


if USE_NUMBA:

    @njit
    def _matmul_tiled_jit(a, b, c, n, tile):
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
                            s = c[i * n + j]
                            k = kk
                            while k < kk + tile and k < n:
                                s += a[i * n + k] * b[k * n + j]
                                k += 1
                            c[i * n + j] = s
                            j += 1
                        i += 1
                    kk += tile
                jj += tile
            ii += tile

    @njit
    def _run_deltas_jit(group_ids, values, n_groups):
        deltas = np.zeros(len(values), dtype=np.uint64)
        last = np.zeros(n_groups, dtype=np.uint64)
        seen = np.zeros(n_groups, dtype=np.bool_)
        for i in range(len(values)):
            g = group_ids[i]
            v = values[i]
            if seen[g]:
                prev = last[g]
                if v >= prev:
                    deltas[i] = v - prev
                else:
                    deltas[i] = 0
            else:
                deltas[i] = v
                seen[g] = True
            last[g] = v
        return deltas

    @njit
    def _accumulate_weights_jit(stack_ids, deltas, n_stacks):
        out = np.zeros(n_stacks, dtype=np.uint64)
        for i in range(len(stack_ids)):
            out[stack_ids[i]] += deltas[i]
        return out

    @njit
    def _symbolize_indices_jit(addrs, starts, ends):
        out = np.empty(len(addrs), dtype=np.int64)
        n = len(starts)
        for i in range(len(addrs)):
            a = addrs[i]
            lo, hi = 0, n
            while lo < hi:
                mid = (lo + hi) // 2
                if starts[mid] <= a:
                    lo = mid + 1
                else:
                    hi = mid
            j = lo - 1
            if j >= 0 and a < ends[j]:
                out[i] = j
            else:
                out[i] = -1
        return out

    @njit
    def _matmul_tiled_counted_jit(a, b, c, n, tile):
        load_bytes = 0
        store_bytes = 0
        int_ops = 0
        fp_ops = 0
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
                            s = c[i * n + j]
                            load_bytes += 4
                            k = kk
                            while k < kk + tile and k < n:
                                s += a[i * n + k] * b[k * n + j]
                                load_bytes += 8
                                fp_ops += 2
                                k += 1
                                int_ops += 1
                            c[i * n + j] = s
                            store_bytes += 4
                            j += 1
                            int_ops += 1
                        i += 1
                        int_ops += 1
                    kk += tile
                    int_ops += 1
                jj += tile
                int_ops += 1
            ii += tile
            int_ops += 1
        return load_bytes, store_bytes, int_ops, fp_ops

    run_deltas = _run_deltas_jit
    accumulate_weights = _accumulate_weights_jit
    symbolize_indices = _symbolize_indices_jit
    matmul_tiled = _matmul_tiled_jit
    matmul_tiled_counted = _matmul_tiled_counted_jit
else:
    run_deltas = _run_deltas_np
    accumulate_weights = _accumulate_weights_np
    symbolize_indices = _symbolize_indices_np
    matmul_tiled = _matmul_tiled_py
    matmul_tiled_counted = _matmul_tiled_counted_py
