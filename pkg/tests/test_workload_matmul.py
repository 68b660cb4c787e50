"""The hand-instrumented workload must reproduce the oracle counts exactly."""

import hashlib

import numpy as np
import pytest

from mperf.roofline import runtime as rt
from mperf.workloads.matmul import LOOP_INFO, make_operands, run_region
from oracles import matmul_expected_counts, matmul_interpreter


@pytest.mark.parametrize("n,tile", [(4, 2), (4, 4), (8, 2), (8, 4), (16, 2), (16, 4)])
@pytest.mark.parametrize("engine", ["blocks", "kernel"])
def test_instrumented_counts_match_oracle(fresh_runtime, n, tile, engine):
    reg = fresh_runtime(mode="instrumented")
    a, b, c = make_operands(n)
    run_region(a, b, c, n, tile, engine)
    (rec,) = reg.snapshot_records()
    assert rec.info == LOOP_INFO

    a2, b2, c2 = make_operands(n)
    oracle = matmul_interpreter(a2, b2, c2, n, tile)
    assert rec.counters.load_bytes == oracle.load_bytes
    assert rec.counters.store_bytes == oracle.store_bytes
    assert rec.counters.int_ops == oracle.int_ops
    assert rec.counters.fp_ops == oracle.fp_ops

    closed = matmul_expected_counts(n, tile)
    assert rec.counters.fp_ops == closed["fp_ops"]
    assert rec.counters.load_bytes == closed["load_bytes"]
    assert rec.counters.store_bytes == closed["store_bytes"]

    # and the float results agree with the per-statement interpreter
    assert np.array_equal(c, c2)


def test_baseline_mode_leaves_counters_zero(fresh_runtime):
    reg = fresh_runtime(mode="baseline")
    a, b, c = make_operands(8)
    run_region(a, b, c, 8, 2)
    (rec,) = reg.snapshot_records()
    assert rec.counters == rt.LoopCounters(0, 0, 0, 0)
    assert rec.invocations == 1
    assert rec.wall_time_ns > 0


def test_engines_produce_identical_results(fresh_runtime):
    fresh_runtime(mode="instrumented")
    results = {}
    for engine in ("blocks", "kernel"):
        a, b, c = make_operands(16)
        run_region(a, b, c, 16, 4, engine)
        results[engine] = hashlib.sha256(c.tobytes()).hexdigest()
    assert results["blocks"] == results["kernel"]


def test_repeat_invocations_accumulate(fresh_runtime):
    reg = fresh_runtime(mode="instrumented")
    a, b, c = make_operands(4)
    for _ in range(3):
        c[:] = 0
        run_region(a, b, c, 4, 2)
    (rec,) = reg.snapshot_records()
    assert rec.invocations == 3
    assert rec.counters.fp_ops == 3 * matmul_expected_counts(4, 2)["fp_ops"]
