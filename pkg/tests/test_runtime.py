import json
import random
import threading

import pytest

from mperf.roofline import runtime as rt
from mperf.roofline.runtime import (
    LoopCounters,
    LoopInfo,
    LoopRecord,
    RunReport,
    parse_report,
    serialize_report,
)

LOOP_A = LoopInfo(42, "foo.c", "bar")
LOOP_B = LoopInfo(99, "foo.c", "baz")


def test_begin_end_without_adds(fresh_runtime):
    reg = fresh_runtime()
    h = reg.loop_begin(LOOP_A)
    reg.loop_end(h)
    (rec,) = reg.snapshot_records()
    assert rec.invocations == 1
    assert rec.wall_time_ns > 0
    assert rec.counters == LoopCounters(0, 0, 0, 0)
    assert rec.phase == "baseline"


def test_same_loop_twice_shares_registry_entry(fresh_runtime):
    reg = fresh_runtime()
    for _ in range(2):
        h = reg.loop_begin(LOOP_A)
        reg.loop_end(h)
    records = reg.snapshot_records()
    assert len(records) == 1
    assert records[0].invocations == 2


def test_nested_regions_lifo(fresh_runtime):
    reg = fresh_runtime()
    ha = reg.loop_begin(LOOP_A)
    hb = reg.loop_begin(LOOP_B)
    reg.loop_end(hb)
    reg.loop_end(ha)
    recs = {r.info: r for r in reg.snapshot_records()}
    assert recs[LOOP_A].invocations == 1
    assert recs[LOOP_B].invocations == 1
    assert reg.misuse_count == 0


def test_add_counts_accumulates(fresh_runtime):
    reg = fresh_runtime(mode="instrumented")
    h = reg.loop_begin(LOOP_A)
    for _ in range(64):
        reg.add_counts(h, 8, 0, 0, 2)
    reg.loop_end(h)
    (rec,) = reg.snapshot_records()
    assert rec.counters.fp_ops == 128
    assert rec.counters.load_bytes == 512


def test_add_zero_is_identity(fresh_runtime):
    reg = fresh_runtime(mode="instrumented")
    h = reg.loop_begin(LOOP_A)
    reg.add_counts(h, 0, 0, 0, 0)
    reg.loop_end(h)
    (rec,) = reg.snapshot_records()
    assert rec.counters == LoopCounters(0, 0, 0, 0)


def test_closed_handle_add_is_misuse_and_dropped(fresh_runtime):
    reg = fresh_runtime()
    h = reg.loop_begin(LOOP_A)
    reg.loop_end(h)
    reg.add_counts(h, 100, 0, 0, 0)
    assert reg.misuse_count == 1
    (rec,) = reg.snapshot_records()
    assert rec.counters.load_bytes == 0


def test_stale_end_is_single_diagnostic(fresh_runtime):
    reg = fresh_runtime()
    h = reg.loop_begin(LOOP_A)
    reg.loop_end(h)
    reg.loop_end(h)  # stale
    assert reg.misuse_count == 1
    (rec,) = reg.snapshot_records()
    assert rec.invocations == 1


def test_out_of_order_end_best_effort_close(fresh_runtime):
    reg = fresh_runtime()
    ha = reg.loop_begin(LOOP_A)
    hb = reg.loop_begin(LOOP_B)
    reg.loop_end(ha)  # out of order: B is innermost
    assert reg.misuse_count == 1
    recs = {r.info: r for r in reg.snapshot_records()}
    assert recs[LOOP_A].invocations == 1
    assert recs[LOOP_B].invocations == 1
    assert not hb.open


def test_balanced_nesting_counts_no_misuse(fresh_runtime):
    reg = fresh_runtime()
    for _ in range(50):
        handles = [reg.loop_begin(LoopInfo(i, "f.c", "fn")) for i in range(5)]
        for h in reversed(handles):
            reg.loop_end(h)
    assert reg.misuse_count == 0


def test_thread_merge_additivity(fresh_runtime):
    """Totals equal the sum of all deltas across threads, exactly."""
    reg = fresh_runtime(mode="instrumented")
    rng = random.Random(17)
    per_thread = [
        [(rng.randint(0, 999), rng.randint(0, 999), rng.randint(0, 999), rng.randint(0, 999))
         for _ in range(rng.randint(50, 200))]
        for _ in range(6)
    ]

    def worker(deltas):
        for chunk_start in range(0, len(deltas), 25):
            h = reg.loop_begin(LOOP_A)
            for d in deltas[chunk_start : chunk_start + 25]:
                reg.add_counts(h, *d)
            reg.loop_end(h)

    threads = [threading.Thread(target=worker, args=(d,)) for d in per_thread]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    (rec,) = reg.snapshot_records()
    flat = [d for deltas in per_thread for d in deltas]
    assert rec.counters.load_bytes == sum(d[0] for d in flat)
    assert rec.counters.store_bytes == sum(d[1] for d in flat)
    assert rec.counters.int_ops == sum(d[2] for d in flat)
    assert rec.counters.fp_ops == sum(d[3] for d in flat)
    assert reg.misuse_count == 0


class TestInstrumentedPredicate:
    def test_mode_unset_is_baseline(self, fresh_runtime):
        reg = fresh_runtime()
        assert reg.is_instrumented_profiling() is False
        h = reg.loop_begin(LOOP_A)
        assert reg.is_instrumented_profiling() is False
        reg.loop_end(h)

    def test_instrumented_no_filter(self, fresh_runtime):
        reg = fresh_runtime(mode="instrumented")
        h = reg.loop_begin(LOOP_A)
        assert reg.is_instrumented_profiling() is True
        reg.loop_end(h)

    def test_filter_miss(self, fresh_runtime):
        reg = fresh_runtime(mode="instrumented", loop_filter="foo.c:42")
        h = reg.loop_begin(LoopInfo(99, "foo.c", "bar"))
        assert reg.is_instrumented_profiling() is False
        reg.loop_end(h)

    def test_filter_hit_comma_separated(self, fresh_runtime):
        reg = fresh_runtime(mode="instrumented", loop_filter="other.c:7,foo.c:42")
        h = reg.loop_begin(LOOP_A)
        assert reg.is_instrumented_profiling() is True
        reg.loop_end(h)

    def test_stable_per_loop_key(self, fresh_runtime):
        reg = fresh_runtime(mode="instrumented", loop_filter="foo.c:42")
        results = set()
        for _ in range(10):
            h = reg.loop_begin(LOOP_A)
            results.add(reg.is_instrumented_profiling())
            reg.loop_end(h)
        assert results == {True}


class TestFinalize:
    def test_report_written_to_env_path(self, fresh_runtime, tmp_path):
        out = tmp_path / "run.json"
        reg = fresh_runtime(mode="instrumented", out=str(out))
        h = reg.loop_begin(LOOP_A)
        reg.add_counts(h, 1, 2, 3, 4)
        reg.loop_end(h)
        reg.finalize()
        obj = json.loads(out.read_text())
        assert obj["phase"] == "instrumented"
        assert obj["records"][0]["file"] == "foo.c"
        assert obj["records"][0]["fp_ops"] == 4

    def test_finalize_idempotent(self, fresh_runtime, tmp_path):
        out = tmp_path / "run.json"
        reg = fresh_runtime(out=str(out))
        h = reg.loop_begin(LOOP_A)
        reg.loop_end(h)
        reg.finalize()
        first = out.read_text()
        out.unlink()
        reg.finalize()  # single-shot: no rewrite
        assert not out.exists()
        assert json.loads(first)["records"][0]["invocations"] == 1

    def test_unwritable_path_dumps_to_stderr(self, fresh_runtime, capfd):
        reg = fresh_runtime(out="/nonexistent-dir/x.json")
        h = reg.loop_begin(LOOP_A)
        reg.loop_end(h)
        reg.finalize()  # must not raise
        err = capfd.readouterr().err
        assert "cannot write report" in err
        assert '"phase"' in err

    def test_open_regions_not_reported(self, fresh_runtime):
        reg = fresh_runtime()
        reg.loop_begin(LOOP_A)  # never ended
        assert reg.snapshot_records() == []

    def test_baseline_purity(self, fresh_runtime):
        # Protocol-conforming baseline run: dispatch picks the uncounted
        # clone, so records carry zero counters.
        reg = fresh_runtime(mode="baseline")
        h = reg.loop_begin(LOOP_A)
        if reg.is_instrumented_profiling():
            reg.add_counts(h, 4, 4, 4, 4)
        reg.loop_end(h)
        (rec,) = reg.snapshot_records()
        assert rec.counters == LoopCounters(0, 0, 0, 0)


def test_report_round_trip():
    records = [
        LoopRecord(LoopInfo(42, "foo.c", "bar"), LoopCounters(640, 128, 96, 128), 3, 12345, "instrumented"),
        LoopRecord(LoopInfo(7, "z.c", "qux"), LoopCounters(0, 0, 0, 0), 1, 99, "instrumented"),
    ]
    report = RunReport("instrumented", records)
    parsed = parse_report(serialize_report(report))
    assert parsed.phase == report.phase
    assert parsed.records == records


def test_module_level_abi_names():
    # The five entry points are part of the ABI; hold them to their names.
    assert callable(rt.mperf_roofline_internal_notify_loop_begin)
    assert callable(rt.mperf_roofline_internal_is_instrumented_profiling)
    assert callable(rt.mperf_roofline_internal_add_counts)
    assert callable(rt.mperf_roofline_internal_notify_loop_end)
    assert callable(rt.finalize_report)


def test_module_functions_route_to_registry(fresh_runtime):
    fresh_runtime(mode="instrumented")
    h = rt.mperf_roofline_internal_notify_loop_begin(LOOP_A)
    assert rt.mperf_roofline_internal_is_instrumented_profiling() is True
    rt.mperf_roofline_internal_add_counts(h, 8, 0, 0, 2)
    rt.mperf_roofline_internal_notify_loop_end(h)
    (rec,) = rt._registry.snapshot_records()
    assert rec.counters.fp_ops == 2
