import logging
from typing import Iterable, List, Mapping, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .errors import ConfigError, EmptyPageError, PageIndexError, ShapeError
from .models import KVPage, PageMetadata
from .schemas import CacheConfig

logger = logging.getLogger(__name__)

_INITIAL_TOKENS = 64


# ============================================================
# 🗄️ PAGED KV CACHE
# ============================================================
class PagedKvCache:
    """Append-only paged key/value store.

    Keys and values live in two contiguous (capacity, d) buffers; page j owns
    rows [j*S, j*S + S). Per-page bounding boxes are kept in two (pages, d)
    buffers and widened on every append, so they always equal the batch
    min/max of the page's keys.

    One writer at a time. Readers may run concurrently between appends.
    """

    def __init__(self, config: CacheConfig):
        if config.d < 1 or config.page_size < 1:
            raise ConfigError(f"invalid cache config: d={config.d}, S={config.page_size}")
        self.config = config
        self._dtype = config.dtype
        self._keys = np.empty((_INITIAL_TOKENS, config.d), dtype=self._dtype)
        self._values = np.empty((_INITIAL_TOKENS, config.d), dtype=self._dtype)
        pages = -(-_INITIAL_TOKENS // config.page_size)
        self._mins = np.empty((pages, config.d), dtype=self._dtype)
        self._maxs = np.empty((pages, config.d), dtype=self._dtype)
        self.total_len = 0

    # --- geometry ---
    @property
    def d(self) -> int:
        return self.config.d

    @property
    def page_size(self) -> int:
        return self.config.page_size

    @property
    def page_count(self) -> int:
        return -(-self.total_len // self.config.page_size)

    def __len__(self) -> int:
        return self.total_len

    def page_len(self, page_id: int) -> int:
        self._check_page(page_id)
        S = self.config.page_size
        return min(S, self.total_len - page_id * S)

    # --- raw views (read-only by convention) ---
    @property
    def keys(self) -> np.ndarray:
        return self._keys[: self.total_len]

    @property
    def values(self) -> np.ndarray:
        return self._values[: self.total_len]

    @property
    def mins(self) -> np.ndarray:
        return self._mins[: self.page_count]

    @property
    def maxs(self) -> np.ndarray:
        return self._maxs[: self.page_count]

    def meta(self, page_id: int) -> PageMetadata:
        self._check_page(page_id)
        return PageMetadata(m=self._mins[page_id].copy(), M=self._maxs[page_id].copy())

    def page(self, page_id: int) -> KVPage:
        self._check_page(page_id)
        S = self.config.page_size
        start = page_id * S
        stop = min(start + S, self.total_len)
        return KVPage(
            page_id=page_id,
            keys=self._keys[start:stop].copy(),
            values=self._values[start:stop].copy(),
            meta=self.meta(page_id),
        )

    @property
    def pages(self) -> List[KVPage]:
        return [self.page(j) for j in range(self.page_count)]

    # --- mutation ---
    def _coerce(self, vec, name: str) -> np.ndarray:
        arr = np.asarray(vec, dtype=self._dtype)
        if arr.shape != (self.config.d,):
            raise ShapeError(f"{name} has shape {arr.shape}, expected ({self.config.d},)")
        return arr

    def _reserve(self, tokens: int) -> None:
        if tokens > self._keys.shape[0]:
            capacity = self._keys.shape[0]
            while capacity < tokens:
                capacity *= 2
            self._keys = _grow(self._keys, capacity)
            self._values = _grow(self._values, capacity)
        pages = -(-tokens // self.config.page_size)
        if pages > self._mins.shape[0]:
            capacity = self._mins.shape[0]
            while capacity < pages:
                capacity *= 2
            self._mins = _grow(self._mins, capacity)
            self._maxs = _grow(self._maxs, capacity)

    def append(self, k, v) -> None:
        k = self._coerce(k, "k")
        v = self._coerce(v, "v")
        self._reserve(self.total_len + 1)

        t = self.total_len
        page_id, offset = divmod(t, self.config.page_size)
        self._keys[t] = k
        self._values[t] = v
        if offset == 0:
            # first key of a page: the box is the key itself
            self._mins[page_id] = k
            self._maxs[page_id] = k
        else:
            np.minimum(self._mins[page_id], k, out=self._mins[page_id])
            np.maximum(self._maxs[page_id], k, out=self._maxs[page_id])
        self.total_len = t + 1

    def extend(self, keys, values) -> None:
        """Bulk append; leaves the cache exactly as repeated `append` would."""
        keys = np.asarray(keys, dtype=self._dtype)
        values = np.asarray(values, dtype=self._dtype)
        if keys.ndim != 2 or keys.shape[1] != self.config.d or values.shape != keys.shape:
            raise ShapeError(f"extend needs two (n, {self.config.d}) arrays, got {keys.shape} and {values.shape}")
        n = keys.shape[0]
        if n == 0:
            return
        start = self.total_len
        self._reserve(start + n)
        self._keys[start:start + n] = keys
        self._values[start:start + n] = values

        S = self.config.page_size
        first_page = start // S
        last_page = (start + n - 1) // S
        for page_id in range(first_page, last_page + 1):
            lo = max(page_id * S, start)
            hi = min(page_id * S + S, start + n)
            chunk = keys[lo - start:hi - start]
            if lo == page_id * S:
                self._mins[page_id] = chunk.min(axis=0)
                self._maxs[page_id] = chunk.max(axis=0)
            else:
                np.minimum(self._mins[page_id], chunk.min(axis=0), out=self._mins[page_id])
                np.maximum(self._maxs[page_id], chunk.max(axis=0), out=self._maxs[page_id])
        self.total_len = start + n

    def overwrite_metadata(self, page_id: int, meta: PageMetadata) -> None:
        """Test hook: replace a page's box without touching its keys."""
        self._check_page(page_id)
        logger.warning("metadata of page %d overwritten by test hook", page_id)
        self._mins[page_id] = meta.m
        self._maxs[page_id] = meta.M

    def _check_page(self, page_id: int) -> None:
        if not 0 <= page_id < self.page_count:
            raise PageIndexError(f"page {page_id} out of range (page_count={self.page_count})")


def _grow(buf: np.ndarray, rows: int) -> np.ndarray:
    grown = np.empty((rows, buf.shape[1]), dtype=buf.dtype)
    grown[: buf.shape[0]] = buf
    return grown


# ============================================================
# 🛠️ OPERATIONS
# ============================================================
def new_cache(config: Union[CacheConfig, Mapping]) -> PagedKvCache:
    if not isinstance(config, CacheConfig):
        try:
            config = CacheConfig(**config)
        except ValidationError as e:
            raise ConfigError(f"invalid cache config: {e.errors()[0]['msg']}") from e
    return PagedKvCache(config)


def append(cache: PagedKvCache, k, v) -> PagedKvCache:
    cache.append(k, v)
    return cache


def extend(cache: PagedKvCache, keys, values) -> PagedKvCache:
    cache.extend(keys, values)
    return cache


def recompute_metadata(keys) -> PageMetadata:
    arr = np.asarray(keys)
    if arr.size == 0:
        raise EmptyPageError("cannot build metadata for an empty page")
    if arr.ndim != 2:
        raise ShapeError(f"keys must be a (n, d) array, got shape {arr.shape}")
    return PageMetadata(m=arr.min(axis=0), M=arr.max(axis=0))


def page_token_index(cache: PagedKvCache, page_ids: Iterable[int]) -> np.ndarray:
    """Token rows covered by `page_ids`, ascending page order."""
    ids = np.unique(np.asarray(list(page_ids) if not isinstance(page_ids, np.ndarray) else page_ids, dtype=np.int64))
    if ids.size == 0:
        return ids
    if ids[0] < 0 or ids[-1] >= cache.page_count:
        raise PageIndexError(f"page ids {ids.tolist()} out of range (page_count={cache.page_count})")
    S = cache.page_size
    rows = (ids[:, None] * S + np.arange(S, dtype=np.int64)).ravel()
    # only the last page can be partial
    return rows[rows < cache.total_len]


def gather(cache: PagedKvCache, page_ids: Iterable[int]) -> Tuple[np.ndarray, np.ndarray]:
    rows = page_token_index(cache, page_ids)
    return cache.keys[rows], cache.values[rows]
