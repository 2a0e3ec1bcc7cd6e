import json

import numpy as np
import pytest

from app.engine import run_session
from app.errors import ConfigError, TraceFormatError, TraceParseError
from app.models import PolicyKind, TraceMode
from app.schemas import CacheConfig, CostParams, SelectionPolicy, TraceKnobs, WorkloadConfig
from app.workload import gen_trace, poisson_arrivals, read_trace, run_sessions, simulate_serving, write_trace

FULL = SelectionPolicy(kind=PolicyKind.FULL_CACHE)
TOP_K = SelectionPolicy(kind=PolicyKind.QUERY_AWARE_TOP_K, k_ratio=0.3)


# ============================================================
# 🧪 TRACES
# ============================================================
@pytest.mark.parametrize("mode", ["gaussian", "clustered", "drifting", "repetition"])
def test_same_seed_same_trace(mode):
    a = gen_trace(mode, 42, 64, 8)
    b = gen_trace(mode, 42, 64, 8)
    assert a.equals(b)
    assert not a.equals(gen_trace(mode, 43, 64, 8))
    assert a.header == {"rng": "PCG64", "seed": 42, "mode": mode}


def test_single_step_trace():
    assert len(gen_trace("clustered", 0, 1, 4)) == 1


@pytest.mark.parametrize("mode", ["spiral", "file"])
def test_ungeneratable_modes(mode):
    with pytest.raises(ConfigError):
        gen_trace(mode, 0, 8, 4)


def test_probs_are_distributions():
    trace = gen_trace("gaussian", 1, 16, 4, TraceKnobs(with_probs=True))
    for p in trace.probs:
        assert abs(p.sum() - 1.0) <= 1e-9


def test_clustered_trace_is_easier_than_gaussian():
    cfg = CacheConfig(d=64, page_size=16)
    errs = {}
    for mode in ("clustered", "gaussian"):
        trace = gen_trace(mode, 42, 512, 64, TraceKnobs(cluster_count=4, query_locality=0.95))
        errs[mode] = run_session(trace, TOP_K, CostParams(), cfg, shadow=True).mean_out_err
    assert errs["clustered"] < errs["gaussian"]


# ============================================================
# 📄 TRACE FILES
# ============================================================
def test_trace_file_keeps_every_bit(tmp_path):
    trace = gen_trace("drifting", 5, 20, 3, TraceKnobs(with_probs=True, probs_width=4))
    path = tmp_path / "t.jsonl"
    write_trace(trace, path)
    back = read_trace(path)
    assert back.equals(trace)
    assert back.header["rng"] == "PCG64"


def test_empty_trace_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(TraceFormatError, match="missing header"):
        read_trace(path)


def test_short_vector_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    lines = [
        json.dumps({"format": "tinykv-trace", "version": 1, "d": 4}),
        json.dumps({"q": [0, 0, 0, 0], "k": [0, 0, 0, 0], "v": [0, 0, 0, 0]}),
        json.dumps({"q": [0, 0, 0], "k": [0, 0, 0, 0], "v": [0, 0, 0, 0]}),
    ]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceFormatError) as exc:
        read_trace(path)
    assert exc.value.line == 3


def test_missing_trace_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read trace file"):
        read_trace(tmp_path / "nope.jsonl")


def test_undecodable_bytes_name_line(tmp_path):
    path = tmp_path / "binary.jsonl"
    header = json.dumps({"format": "tinykv-trace", "version": 1, "d": 2}).encode("utf-8")
    path.write_bytes(header + b"\n\xff\xfe\n")
    with pytest.raises(TraceParseError) as exc:
        read_trace(path)
    assert exc.value.line == 2


@pytest.mark.parametrize("d", [0, -3])
def test_header_dimension_must_be_positive(tmp_path, d):
    path = tmp_path / "flat.jsonl"
    path.write_text(json.dumps({"format": "tinykv-trace", "version": 1, "d": d}) + "\n")
    with pytest.raises(TraceParseError) as exc:
        read_trace(path)
    assert exc.value.line == 1


def test_malformed_line_names_line(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text(json.dumps({"format": "tinykv-trace", "version": 1, "d": 2}) + "\n{not json\n")
    with pytest.raises(TraceParseError) as exc:
        read_trace(path)
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)


# ============================================================
# 🕒 ARRIVALS
# ============================================================
def test_arrivals_deterministic_and_increasing():
    a = poisson_arrivals(50.0, 100, 9)
    np.testing.assert_array_equal(a, poisson_arrivals(50.0, 100, 9))
    assert np.all(np.diff(a) > 0)
    assert a[0] > 0


def test_single_arrival():
    a = poisson_arrivals(50.0, 1, 0)
    assert a.shape == (1,)
    assert a[0] > 0


def test_arrival_gap_mean():
    gaps = np.diff(np.concatenate([[0.0], poisson_arrivals(50.0, 10000, 42)]))
    assert abs(gaps.mean() - 50.0) <= 2.5


def test_arrivals_reject_bad_mean():
    with pytest.raises(ConfigError):
        poisson_arrivals(0.0, 10, 0)


# ============================================================
# 🏭 SERVING SIMULATOR
# ============================================================
def _workload(**kw):
    base = dict(num_sessions=8, tokens_min=300, tokens_max=400, seed=3, warmup_steps=64)
    base.update(kw)
    return WorkloadConfig(**base)


def test_full_cache_hit_rate_after_warmup():
    metrics = simulate_serving(_workload(), FULL, CostParams(), CacheConfig(d=16))
    assert metrics.mean_hit_rate >= 0.99
    assert metrics.sessions == 8


def test_top_k_serves_faster():
    cfg = _workload()
    full = simulate_serving(cfg, FULL, CostParams(), CacheConfig(d=16))
    sparse = simulate_serving(cfg, TOP_K, CostParams(), CacheConfig(d=16))
    assert sparse.throughput_req_s > full.throughput_req_s
    assert sparse.p50_ms < full.p50_ms
    assert sparse.mean_memory_fraction < full.mean_memory_fraction


def test_service_time_gap_without_queueing():
    # arrivals far apart relative to service, so latency is pure decode time
    cfg = _workload(mean_interarrival_ms=1e6)
    full = simulate_serving(cfg, FULL, CostParams(), CacheConfig(d=16))
    sparse = simulate_serving(cfg, TOP_K, CostParams(), CacheConfig(d=16))
    assert 0.0 < sparse.mean_service_ms < 0.8 * full.mean_service_ms
    assert sparse.p50_ms <= sparse.p99_ms <= sparse.makespan_ms
    # throughput is arrival-bound here; the per-request gap only shows in service time
    assert abs(sparse.throughput_req_s - full.throughput_req_s) < 0.01 * full.throughput_req_s


def test_simulation_is_deterministic():
    cfg = _workload(num_sessions=4, tokens_min=50, tokens_max=80)
    a = simulate_serving(cfg, TOP_K, CostParams(), CacheConfig(d=8))
    b = simulate_serving(cfg, TOP_K, CostParams(), CacheConfig(d=8))
    assert a == b


def test_threaded_sessions_match_serial():
    serial = run_sessions(_workload(num_sessions=6, tokens_min=30, tokens_max=60), TOP_K, CostParams(),
                          CacheConfig(d=8))
    threaded = run_sessions(_workload(num_sessions=6, tokens_min=30, tokens_max=60, workers=3), TOP_K,
                            CostParams(), CacheConfig(d=8))
    assert [r.session_id for r in threaded] == list(range(6))
    assert all(a.same_as(b) for a, b in zip(serial, threaded))


def test_session_lengths_stay_in_range():
    cfg = _workload(num_sessions=12, tokens_min=30, tokens_max=34)
    assert cfg.tokens_per_request == (30, 34)
    reports = run_sessions(cfg, TOP_K, CostParams(), CacheConfig(d=4))
    assert all(30 <= r.steps <= 34 for r in reports)


def test_single_session_percentiles_coincide():
    metrics = simulate_serving(_workload(num_sessions=1, tokens_min=20, tokens_max=20), FULL, CostParams(),
                               CacheConfig(d=4))
    assert metrics.p50_ms == metrics.p99_ms


def test_one_slot_queues_requests():
    cfg = _workload(num_sessions=5, tokens_min=40, tokens_max=40, mean_interarrival_ms=1e-6, max_concurrency=1)
    wide = simulate_serving(cfg.model_copy(update={"max_concurrency": 5}), FULL, CostParams(), CacheConfig(d=4))
    narrow = simulate_serving(cfg, FULL, CostParams(), CacheConfig(d=4))
    assert narrow.p99_ms > wide.p99_ms


def test_file_mode_replays_trace(tmp_path):
    path = tmp_path / "t.jsonl"
    write_trace(gen_trace("clustered", 1, 50, 8), path)
    cfg = _workload(num_sessions=2, tokens_min=30, tokens_max=60, trace_mode=TraceMode.FILE, trace_path=str(path))
    metrics = simulate_serving(cfg, TOP_K, CostParams(), CacheConfig(d=8))
    assert metrics.sessions == 2


def test_file_mode_needs_path():
    with pytest.raises(ValueError):
        WorkloadConfig(trace_mode=TraceMode.FILE)
