import os
import subprocess
import sys

import numpy as np
import pytest

from mperf import kernels
from oracles import matmul_expected_counts, matmul_interpreter


def _rand_stream(rng, n, n_groups):
    gids = rng.integers(0, n_groups, size=n).astype(np.int64)
    # cumulative-ish values with occasional resets
    values = np.zeros(n, dtype=np.uint64)
    cur = np.zeros(n_groups, dtype=np.uint64)
    for i in range(n):
        g = gids[i]
        if rng.random() < 0.03:
            cur[g] = rng.integers(0, 100)
        else:
            cur[g] += rng.integers(0, 10_000)
        values[i] = cur[g]
    return gids, values


def test_run_deltas_variants_agree():
    rng = np.random.default_rng(42)
    gids, values = _rand_stream(rng, 5000, 7)
    expected = kernels._run_deltas_py(gids, values, 7)
    assert np.array_equal(kernels._run_deltas_np(gids, values, 7), expected)
    if kernels.USE_NUMBA:
        assert np.array_equal(kernels._run_deltas_jit(gids, values, 7), expected)


def test_run_deltas_clamps_resets():
    gids = np.zeros(3, dtype=np.int64)
    values = np.array([100, 40, 90], dtype=np.uint64)
    out = kernels.run_deltas(gids, values, 1)
    assert list(out) == [100, 0, 50]


def test_run_deltas_first_sample_keeps_value_per_group():
    gids = np.array([0, 1, 0, 1], dtype=np.int64)
    values = np.array([10, 7, 15, 9], dtype=np.uint64)
    out = kernels.run_deltas(gids, values, 2)
    assert list(out) == [10, 7, 5, 2]


def test_accumulate_weights_variants_agree():
    rng = np.random.default_rng(1)
    ids = rng.integers(0, 50, size=4000).astype(np.int64)
    deltas = rng.integers(0, 2**40, size=4000).astype(np.uint64)
    expected = kernels._accumulate_weights_np(ids, deltas, 50)
    if kernels.USE_NUMBA:
        got = kernels._accumulate_weights_jit(ids, deltas, 50)
        assert np.array_equal(got, expected)
    # exact integer accumulation, no float round-off
    assert int(expected.sum()) == int(deltas.sum())


def test_symbolize_indices_variants_agree():
    starts = np.array([0x1000, 0x2000, 0x8000], dtype=np.uint64)
    ends = np.array([0x1800, 0x3000, 0x8004], dtype=np.uint64)
    addrs = np.array(
        [0x0, 0x1000, 0x17FF, 0x1800, 0x2FFF, 0x8003, 0x8004, 0xFFFF], dtype=np.uint64
    )
    expected = [-1, 0, 0, -1, 1, 2, -1, -1]
    assert list(kernels._symbolize_indices_np(addrs, starts, ends)) == expected
    if kernels.USE_NUMBA:
        assert list(kernels._symbolize_indices_jit(addrs, starts, ends)) == expected


@pytest.mark.parametrize("n,tile", [(4, 2), (8, 4), (16, 2)])
def test_matmul_counted_variants_agree(n, tile):
    rng = np.random.default_rng(n * 100 + tile)
    a = rng.standard_normal(n * n).astype(np.float32)
    b = rng.standard_normal(n * n).astype(np.float32)
    c_py = np.zeros(n * n, dtype=np.float32)
    c_jit = np.zeros(n * n, dtype=np.float32)
    counts_py = kernels._matmul_tiled_counted_py(a, b, c_py, n, tile)
    expected = matmul_expected_counts(n, tile)
    assert counts_py[3] == expected["fp_ops"]
    assert counts_py[0] == expected["load_bytes"]
    assert counts_py[1] == expected["store_bytes"]
    if kernels.USE_NUMBA:
        counts_jit = kernels._matmul_tiled_counted_jit(a, b, c_jit, n, tile)
        assert tuple(counts_jit) == tuple(counts_py)
        assert np.array_equal(c_py, c_jit)  # bit-identical f32 math


def test_matmul_counted_matches_interpreter_oracle():
    n, tile = 8, 2
    rng = np.random.default_rng(3)
    a = rng.standard_normal(n * n).astype(np.float32)
    b = rng.standard_normal(n * n).astype(np.float32)
    c_kernel = np.zeros(n * n, dtype=np.float32)
    c_oracle = np.zeros(n * n, dtype=np.float32)
    counts = kernels.matmul_tiled_counted(a, b, c_kernel, n, tile)
    oracle = matmul_interpreter(a, b, c_oracle, n, tile)
    assert tuple(counts) == oracle.as_tuple()
    assert np.array_equal(c_kernel, c_oracle)


def test_uncounted_matmul_same_math():
    n, tile = 8, 4
    rng = np.random.default_rng(4)
    a = rng.standard_normal(n * n).astype(np.float32)
    b = rng.standard_normal(n * n).astype(np.float32)
    c1 = np.zeros(n * n, dtype=np.float32)
    c2 = np.zeros(n * n, dtype=np.float32)
    kernels.matmul_tiled(a, b, c1, n, tile)
    kernels.matmul_tiled_counted(a, b, c2, n, tile)
    assert np.array_equal(c1, c2)


def test_env_flag_disables_numba():
    code = (
        "import mperf.kernels as k; "
        "print(k.USE_NUMBA, k.run_deltas is k._run_deltas_np)"
    )
    env = dict(os.environ, MPERF_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "False True"
