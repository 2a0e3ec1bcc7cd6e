import logging
import math
from typing import Callable, Dict, Optional

import numpy as np

from .attention import stable_softmax
from .errors import BudgetError, ConfigError, EmptyCacheError, EmptyInputError, NormalizationError, ShapeError
from .models import PageMetadata, PolicyKind, SelectionResult
from .paged_kv import PagedKvCache
from .schemas import SelectionPolicy

logger = logging.getLogger(__name__)


# ============================================================
# 📏 RELEVANCE SCORING
# ============================================================
def _row_sums(terms: np.ndarray) -> np.ndarray:
    # Scores and exact dots both reduce through here so that, term by term,
    # the bound is summed in the same order as the dot it bounds.
    return terms.sum(axis=-1)


def _bound_scores(q: np.ndarray, mins: np.ndarray, maxs: np.ndarray) -> np.ndarray:
    terms = np.where(q >= 0, q * maxs, q * mins)
    return _row_sums(terms)


def _as_query(q, d: int) -> np.ndarray:
    q = np.asarray(q)
    if q.dtype.kind != "f":
        q = q.astype(np.float64)
    if q.shape != (d,):
        raise ShapeError(f"q has shape {q.shape}, expected ({d},)")
    return q


def score_page(q, meta: PageMetadata) -> float:
    """Upper bound on q·k for every key k inside the page's box."""
    q = _as_query(q, meta.M.shape[0])
    return float(_bound_scores(q, meta.m[None, :], meta.M[None, :])[0])


def score_all(q, cache: PagedKvCache) -> np.ndarray:
    if cache.page_count == 0:
        raise EmptyCacheError("cannot score an empty cache")
    q = _as_query(q, cache.d)
    return _bound_scores(q, cache.mins, cache.maxs)


def exact_dots(q, keys) -> np.ndarray:
    keys = np.asarray(keys)
    q = _as_query(q, keys.shape[-1])
    return _row_sums(keys * q)


def exact_max_dot(q, keys) -> float:
    keys = np.asarray(keys)
    if keys.size == 0:
        raise EmptyInputError("no keys to take a maximum over")
    return float(exact_dots(q, keys).max())


# ============================================================
# 🏆 TOP-K
# ============================================================
def top_k_pages(scores, K: int, strategy_name: str = PolicyKind.QUERY_AWARE_TOP_K.value) -> SelectionResult:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyInputError("top-k over no scores")
    if K < 1:
        raise BudgetError(f"K must be >= 1, got {K}")
    K = min(int(K), scores.size)
    # stable sort on -score: equal scores keep ascending page order
    order = np.argsort(-scores, kind="stable")[:K]
    ids = np.sort(order)
    return SelectionResult(page_ids=ids, scores=scores[ids], strategy_name=strategy_name)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def resolve_page_budget(policy: SelectionPolicy, page_count: int, page_size: int) -> int:
    if policy.k_pages is not None:
        K = policy.k_pages
    elif policy.budget_tokens is not None:
        K = -(-policy.budget_tokens // page_size)
    else:
        K = max(1, round_half_up(policy.k_ratio * page_count))
    return max(1, min(K, page_count))


# ============================================================
# 🔌 STRATEGIES
# ============================================================
Strategy = Callable[[SelectionPolicy, np.ndarray, PagedKvCache, np.ndarray], np.ndarray]


def _full_cache(policy, q, cache, scores):
    return np.arange(cache.page_count, dtype=np.int64)


def _query_aware_top_k(policy, q, cache, scores):
    K = resolve_page_budget(policy, cache.page_count, cache.page_size)
    return top_k_pages(scores, K).page_ids


def _streaming_window(policy, q, cache, scores):
    S = cache.page_size
    first_token = max(0, cache.total_len - policy.window_tokens)
    window = np.arange(first_token // S, cache.page_count, dtype=np.int64)
    sinks = np.arange(min(policy.sink_pages, cache.page_count), dtype=np.int64)
    return np.union1d(sinks, window)


def _soft_prune(policy, q, cache, scores):
    weights = stable_softmax(scores)
    keep = np.flatnonzero(weights >= policy.weight_threshold)
    if keep.size == 0:
        # argmax takes the lowest index on ties
        keep = np.array([int(np.argmax(weights))], dtype=np.int64)
    return keep.astype(np.int64)


STRATEGIES: Dict[str, Strategy] = {
    PolicyKind.FULL_CACHE.value: _full_cache,
    PolicyKind.QUERY_AWARE_TOP_K.value: _query_aware_top_k,
    PolicyKind.STREAMING_WINDOW.value: _streaming_window,
    PolicyKind.SOFT_PRUNE.value: _soft_prune,
}


def register_strategy(name: str, strategy: Strategy) -> None:
    """Make `strategy` selectable as `SelectionPolicy(kind=name)`; replaces any strategy of that name."""
    if not name or not name.strip():
        raise ConfigError("strategy name must be non-empty")
    STRATEGIES[name.strip()] = strategy


def select(policy: SelectionPolicy, q, cache: PagedKvCache,
           prev: Optional[SelectionResult] = None) -> SelectionResult:
    """Pick the pages to attend for this step.

    Scores are recomputed from scratch every call; `prev` is accepted so
    strategies that want the previous step's choice can read it.
    """
    scores = score_all(q, cache)
    strategy = STRATEGIES.get(policy.kind)
    if strategy is None:
        raise ConfigError(f"unknown selection strategy '{policy.kind}' (known: {', '.join(sorted(STRATEGIES))})")
    ids = np.asarray(strategy(policy, q, cache, scores), dtype=np.int64)
    logger.debug("%s kept %d/%d pages", policy.kind, ids.size, cache.page_count)
    return SelectionResult(page_ids=ids, scores=scores[ids], strategy_name=policy.kind)


# ============================================================
# 🛑 ENTROPY EARLY EXIT
# ============================================================
def entropy(probs) -> float:
    p = np.asarray(probs, dtype=np.float64)
    if p.size == 0:
        raise EmptyInputError("entropy of an empty distribution")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise NormalizationError(f"probabilities must be non-negative and sum to 1 (sum={p.sum():.12g})")
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def entropy_should_stop(probs, threshold: float) -> bool:
    return entropy(probs) < threshold
