import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from app.attention import full_attention, output_error, sparse_attention, stable_softmax
from app.errors import EmptyCacheError, EmptyInputError, NumericError, PageIndexError, ShapeError
from app.models import PolicyKind, SelectionResult
from app.paged_kv import new_cache
from app.schemas import CacheConfig, SelectionPolicy
from app.selection import select


# --- SOFTMAX ---

def test_softmax_symmetric_pair():
    np.testing.assert_array_equal(stable_softmax([0.0, 0.0]), [0.5, 0.5])


@pytest.mark.parametrize("c", [-1e300, -3.0, 0.0, 1e300])
def test_softmax_single_logit(c):
    np.testing.assert_array_equal(stable_softmax([c]), [1.0])


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_softmax_is_a_distribution(logits):
    w = stable_softmax(logits)
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) <= 1e-9


def test_softmax_errors():
    with pytest.raises(EmptyInputError):
        stable_softmax([])
    with pytest.raises(NumericError):
        stable_softmax([0.0, np.inf])
    with pytest.raises(NumericError):
        stable_softmax([np.nan])


# --- FULL ATTENTION ---

def test_single_token_returns_its_value():
    cache = new_cache(CacheConfig(d=3, page_size=4))
    cache.append([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    out = full_attention([0.3, -0.1, 2.0], cache)
    np.testing.assert_array_equal(out.o, [4.0, 5.0, 6.0])
    np.testing.assert_array_equal(out.weights, [1.0])


def test_zero_query_averages_values(rng):
    cache = new_cache(CacheConfig(d=5, page_size=4))
    cache.extend(rng.standard_normal((9, 5)), rng.standard_normal((9, 5)))
    out = full_attention(np.zeros(5), cache)
    np.testing.assert_allclose(out.o, cache.values.mean(axis=0), rtol=1e-12, atol=1e-12)


def test_two_point_softmax():
    cache = new_cache(CacheConfig(d=1, page_size=2))
    cache.append([1.0], [1.0])
    cache.append([-1.0], [0.0])
    out = full_attention([10.0], cache)
    assert out.weights[0] == pytest.approx(1.0 / (1.0 + math.exp(-20.0)))
    assert abs(out.o[0] - 1.0) < 1e-6


def test_scaled_logits_divide_by_sqrt_d():
    cache = new_cache(CacheConfig(d=4, page_size=2))
    cache.append([1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0])
    cache.append([0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0])
    out = full_attention([2.0, 0.0, 0.0, 0.0], cache, scaled=True)
    # logits (1, 0) after scaling by 1/2
    assert out.weights[0] == pytest.approx(math.e / (math.e + 1.0))


@given(
    kv=arrays(np.float64, st.tuples(st.integers(1, 24), st.integers(1, 6)),
              elements=st.floats(-50, 50, allow_nan=False)),
    data=st.data(),
)
def test_output_stays_inside_value_range(kv, data):
    d = kv.shape[1]
    values = data.draw(arrays(np.float64, kv.shape, elements=st.floats(-50, 50, allow_nan=False)))
    q = data.draw(arrays(np.float64, d, elements=st.floats(-5, 5, allow_nan=False)))
    cache = new_cache(CacheConfig(d=d, page_size=4))
    cache.extend(kv, values)
    out = full_attention(q, cache)
    tol = 1e-9 * (1.0 + np.abs(values).max())
    assert np.all(out.o >= values.min(axis=0) - tol)
    assert np.all(out.o <= values.max(axis=0) + tol)


def test_token_order_does_not_change_output(rng):
    keys = rng.standard_normal((37, 6))
    values = rng.standard_normal((37, 6))
    q = rng.standard_normal(6)
    order = rng.permutation(37)
    a = new_cache(CacheConfig(d=6, page_size=8))
    a.extend(keys, values)
    b = new_cache(CacheConfig(d=6, page_size=5))
    b.extend(keys[order], values[order])
    np.testing.assert_allclose(full_attention(q, a).o, full_attention(q, b).o, rtol=1e-12, atol=1e-12)


def test_full_attention_empty_cache():
    with pytest.raises(EmptyCacheError):
        full_attention(np.zeros(2), new_cache(CacheConfig(d=2, page_size=2)))


# --- SPARSE ATTENTION ---

def test_all_pages_match_oracle(rng):
    cache = new_cache(CacheConfig(d=16, page_size=4))
    cache.extend(rng.standard_normal((37, 16)), rng.standard_normal((37, 16)))
    q = rng.standard_normal(16)
    sel = select(SelectionPolicy(kind=PolicyKind.FULL_CACHE), q, cache)
    assert output_error(sparse_attention(q, cache, sel).o, full_attention(q, cache).o) <= 1e-9


def test_one_token_page_returns_its_value(rng):
    cache = new_cache(CacheConfig(d=3, page_size=4))
    cache.extend(rng.standard_normal((5, 3)), rng.standard_normal((5, 3)))
    sel = SelectionResult(page_ids=np.array([1]), scores=np.array([0.0]), strategy_name="manual")
    out = sparse_attention(rng.standard_normal(3), cache, sel)
    np.testing.assert_array_equal(out.o, cache.values[4])
    assert out.attended_tokens == 1


def test_empty_selection_is_an_index_error(rng):
    cache = new_cache(CacheConfig(d=3, page_size=4))
    cache.append(np.ones(3), np.ones(3))
    empty = SelectionResult(page_ids=np.array([], dtype=np.int64), scores=np.array([]), strategy_name="manual")
    with pytest.raises(PageIndexError):
        sparse_attention(np.ones(3), cache, empty)


# --- OUTPUT ERROR ---

def test_output_error_closed_forms():
    b = np.array([1.0, -2.0, 0.5])
    assert output_error(b, b) == 0.0
    assert output_error(2 * b, b) == pytest.approx(1.0)
    assert output_error([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.sqrt(2))


def test_output_error_shape_mismatch():
    with pytest.raises(ShapeError):
        output_error([1.0, 2.0], [1.0])
