import math
from typing import TYPE_CHECKING

import numpy as np

from .errors import EmptyCacheError, EmptyInputError, NumericError, PageIndexError, ShapeError
from .models import AttentionOutput
from .paged_kv import PagedKvCache, gather

if TYPE_CHECKING:
    from .models import SelectionResult


def stable_softmax(logits) -> np.ndarray:
    x = np.asarray(logits)
    if x.dtype.kind not in "f":
        x = x.astype(np.float64)
    if x.size == 0:
        raise EmptyInputError("softmax of an empty sequence")
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax input contains non-finite values")
    e = np.exp(x - x.max())
    return e / e.sum()


def _check_query(q, d: int, dtype) -> np.ndarray:
    q = np.asarray(q, dtype=dtype)
    if q.shape != (d,):
        raise ShapeError(f"q has shape {q.shape}, expected ({d},)")
    return q


def attend(q: np.ndarray, keys: np.ndarray, values: np.ndarray, scaled: bool = False) -> AttentionOutput:
    """softmax(q·k_i) weighted sum of v_i over the given tokens, in row order."""
    logits = keys @ q
    if scaled:
        logits = logits / math.sqrt(q.shape[0])
    weights = stable_softmax(logits)
    return AttentionOutput(o=weights @ values, weights=weights, attended_tokens=int(keys.shape[0]))


def full_attention(q, cache: PagedKvCache, scaled: bool = False) -> AttentionOutput:
    if cache.total_len == 0:
        raise EmptyCacheError("full attention over an empty cache")
    q = _check_query(q, cache.d, cache.config.dtype)
    return attend(q, cache.keys, cache.values, scaled=scaled)


def sparse_attention(q, cache: PagedKvCache, sel: "SelectionResult", scaled: bool = False) -> AttentionOutput:
    if cache.total_len == 0:
        raise EmptyCacheError("sparse attention over an empty cache")
    if len(sel) == 0:
        raise PageIndexError("selection is empty")
    q = _check_query(q, cache.d, cache.config.dtype)
    keys, values = gather(cache, sel.page_ids)
    return attend(q, keys, values, scaled=scaled)


def output_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"output_error shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))
