import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.errors import ConfigError, EmptyPageError, PageIndexError, ShapeError
from app.paged_kv import append, extend, gather, new_cache, recompute_metadata
from app.schemas import CacheConfig


def _filled(S, rows, d=2):
    cache = new_cache(CacheConfig(d=d, page_size=S))
    for r in rows:
        cache.append(r, r)
    return cache


# --- CONSTRUCTION ---

def test_new_cache_is_empty():
    cache = new_cache({"d": 4, "page_size": 16})
    assert cache.total_len == 0
    assert cache.page_count == 0
    assert new_cache(CacheConfig(d=64, page_size=16)).page_count == 0


@pytest.mark.parametrize("bad", [{"d": 0, "page_size": 16}, {"d": 4, "page_size": 0}])
def test_new_cache_rejects_zero_sizes(bad):
    with pytest.raises(ConfigError):
        new_cache(bad)


# --- APPEND ---

def test_append_widens_box():
    cache = _filled(2, [(1.0, 5.0), (3.0, 2.0)])
    meta = cache.meta(0)
    np.testing.assert_array_equal(meta.m, [1.0, 2.0])
    np.testing.assert_array_equal(meta.M, [3.0, 5.0])


def test_third_token_opens_second_page():
    cache = _filled(2, [(1.0, 5.0), (3.0, 2.0), (0.0, 0.0)])
    assert cache.page_count == 2
    assert cache.page_len(1) == 1


def test_singleton_box_is_the_key():
    cache = new_cache(CacheConfig(d=3, page_size=4))
    append(cache, [0.5, -2.0, 7.0], [0.0, 0.0, 0.0])
    meta = cache.meta(0)
    np.testing.assert_array_equal(meta.m, meta.M)
    np.testing.assert_array_equal(meta.m, [0.5, -2.0, 7.0])


def test_append_rejects_wrong_width():
    cache = new_cache(CacheConfig(d=3, page_size=4))
    with pytest.raises(ShapeError):
        cache.append([1.0, 2.0], [1.0, 2.0, 3.0])


def test_buffers_grow_past_initial_capacity(rng):
    cache = new_cache(CacheConfig(d=4, page_size=3))
    keys = rng.standard_normal((500, 4))
    for k in keys:
        cache.append(k, k)
    assert cache.total_len == 500
    assert cache.page_count == 167
    np.testing.assert_array_equal(cache.keys, keys)


@given(
    keys=arrays(np.float64, st.tuples(st.integers(1, 40), st.integers(1, 6)),
                elements=st.floats(-1e6, 1e6, allow_nan=False)),
    S=st.integers(1, 8),
)
def test_boxes_only_widen(keys, S):
    cache = new_cache(CacheConfig(d=keys.shape[1], page_size=S))
    for k in keys:
        before = [cache.meta(j) for j in range(cache.page_count)]
        cache.append(k, k)
        for j, old in enumerate(before):
            assert np.all(cache.meta(j).m <= old.m)
            assert np.all(cache.meta(j).M >= old.M)
        assert np.all(cache.meta(cache.page_count - 1).m <= k)
        assert np.all(k <= cache.meta(cache.page_count - 1).M)


# --- METADATA ---

def test_recompute_metadata_by_inspection():
    meta = recompute_metadata([(2.0, 3.0), (4.0, 1.0)])
    np.testing.assert_array_equal(meta.m, [2.0, 1.0])
    np.testing.assert_array_equal(meta.M, [4.0, 3.0])
    single = recompute_metadata([(7.0, -1.0)])
    np.testing.assert_array_equal(single.m, single.M)


def test_recompute_metadata_empty():
    with pytest.raises(EmptyPageError):
        recompute_metadata(np.empty((0, 3)))


def test_incremental_matches_batch(rng):
    cache = new_cache(CacheConfig(d=8, page_size=16))
    keys = rng.standard_normal((100, 8))
    for k in keys:
        cache.append(k, k)
    for j in range(cache.page_count):
        assert cache.meta(j).equals(recompute_metadata(cache.page(j).keys))


@given(
    keys=arrays(np.float64, st.tuples(st.integers(1, 80), st.just(3)),
                elements=st.floats(-1e6, 1e6, allow_nan=False)),
    S=st.integers(1, 9),
    split=st.integers(0, 80),
)
def test_extend_equals_repeated_append(keys, S, split):
    split = min(split, keys.shape[0])
    one_by_one = new_cache(CacheConfig(d=3, page_size=S))
    for k in keys:
        one_by_one.append(k, k)
    bulk = new_cache(CacheConfig(d=3, page_size=S))
    extend(bulk, keys[:split], keys[:split])
    extend(bulk, keys[split:], keys[split:])

    assert bulk.total_len == one_by_one.total_len
    np.testing.assert_array_equal(bulk.mins, one_by_one.mins)
    np.testing.assert_array_equal(bulk.maxs, one_by_one.maxs)


def test_float32_cache_keeps_width():
    cache = new_cache(CacheConfig(d=2, page_size=2, precision=32))
    cache.append([1.0, 2.0], [3.0, 4.0])
    assert cache.keys.dtype == np.float32
    assert cache.meta(0).M.dtype == np.float32


# --- GATHER ---

def test_gather_all_pages_is_identity(rng):
    cache = new_cache(CacheConfig(d=4, page_size=5))
    cache.extend(rng.standard_normal((23, 4)), rng.standard_normal((23, 4)))
    keys, values = gather(cache, range(cache.page_count))
    np.testing.assert_array_equal(keys, cache.keys)
    np.testing.assert_array_equal(values, cache.values)


def test_gather_nothing():
    cache = _filled(2, [(1.0, 1.0)])
    keys, values = gather(cache, [])
    assert keys.shape == (0, 2)
    assert values.shape == (0, 2)


def test_gather_keeps_token_order():
    rows = [(float(i), float(i)) for i in range(6)]
    cache = _filled(2, rows)
    keys, _ = gather(cache, [2, 0])
    np.testing.assert_array_equal(keys[:, 0], [0.0, 1.0, 4.0, 5.0])


def test_gather_out_of_range():
    cache = _filled(2, [(1.0, 1.0)] * 3)
    with pytest.raises(PageIndexError):
        gather(cache, [2])
    with pytest.raises(IndexError):
        cache.meta(-1)
