import enum
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd


# 1. Enums
class PolicyKind(str, enum.Enum):
    FULL_CACHE = "FullCache"
    QUERY_AWARE_TOP_K = "QueryAwareTopK"
    STREAMING_WINDOW = "StreamingWindow"
    SOFT_PRUNE = "SoftPrune"


class TraceMode(str, enum.Enum):
    GAUSSIAN = "gaussian"
    CLUSTERED = "clustered"
    DRIFTING = "drifting"
    REPETITION = "repetition"
    FILE = "file"


class OutputFormat(str, enum.Enum):
    CSV = "csv"
    JSON = "json"


# 2. Cache records
@dataclass(frozen=True, eq=False)
class PageMetadata:
    """Per-dimension bounding box of a page's keys: m = minima, M = maxima."""

    m: np.ndarray
    M: np.ndarray

    def equals(self, other: "PageMetadata") -> bool:
        # bit-exact, no tolerance
        return np.array_equal(self.m, other.m) and np.array_equal(self.M, other.M)


@dataclass(frozen=True, eq=False)
class KVPage:
    page_id: int
    keys: np.ndarray
    values: np.ndarray
    meta: PageMetadata

    @property
    def length(self) -> int:
        return int(self.keys.shape[0])

    def __len__(self) -> int:
        return self.length


# 3. Selection & attention results
@dataclass(frozen=True, eq=False)
class SelectionResult:
    page_ids: np.ndarray
    scores: np.ndarray
    strategy_name: str

    def __len__(self) -> int:
        return int(self.page_ids.shape[0])

    def same_as(self, other: "SelectionResult") -> bool:
        return (
            self.strategy_name == other.strategy_name
            and np.array_equal(self.page_ids, other.page_ids)
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(frozen=True, eq=False)
class AttentionOutput:
    o: np.ndarray
    weights: np.ndarray
    attended_tokens: int


@dataclass(frozen=True)
class GapStats:
    mean_gap: float
    max_gap: float
    sigma2: float
    bound: float
    samples: int = 0


@dataclass(frozen=True, eq=False)
class StepOutcome:
    output: AttentionOutput
    selection: SelectionResult
    simulated_cycles: float
    hit_rate: float
    stopped_early: bool = False
    out_err: Optional[float] = None


# 4. Traces
@dataclass(frozen=True, eq=False)
class TraceEvent:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    probs: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class Trace:
    """A decode stream: row t of q/k/v is the (q_t, k_t, v_t) of step t."""

    d: int
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    probs: Optional[Sequence[Optional[np.ndarray]]] = None
    header: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.q.shape[0])

    def event(self, t: int) -> TraceEvent:
        p = self.probs[t] if self.probs is not None else None
        return TraceEvent(q=self.q[t], k=self.k[t], v=self.v[t], probs=p)

    @property
    def events(self) -> Iterator[TraceEvent]:
        return (self.event(t) for t in range(len(self)))

    def equals(self, other: "Trace") -> bool:
        if self.d != other.d or len(self) != len(other):
            return False
        if not (np.array_equal(self.q, other.q) and np.array_equal(self.k, other.k)
                and np.array_equal(self.v, other.v)):
            return False
        mine = self.probs if self.probs is not None else [None] * len(self)
        theirs = other.probs if other.probs is not None else [None] * len(other)
        for a, b in zip(mine, theirs):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


# 5. Session report
STEP_COLUMNS: List[str] = [
    "step", "policy", "pages_total", "pages_selected", "hit_rate", "sim_cycles", "out_err",
]


@dataclass(frozen=True, eq=False)
class SessionReport:
    session_id: int
    policy: str
    records: pd.DataFrame
    mean_out_err: Optional[float]
    mean_cycles: float
    p50_cycles: float
    p99_cycles: float
    final_cycles: float
    total_cycles: float
    mean_hit_rate: float
    rho_hat: float
    stopped_at: Optional[int] = None

    @property
    def steps(self) -> int:
        return int(len(self.records))

    def summary(self) -> dict:
        return {
            "session_id": self.session_id,
            "policy": self.policy,
            "steps": self.steps,
            "mean_out_err": self.mean_out_err,
            "mean_cycles": self.mean_cycles,
            "p50_cycles": self.p50_cycles,
            "p99_cycles": self.p99_cycles,
            "final_cycles": self.final_cycles,
            "total_cycles": self.total_cycles,
            "mean_hit_rate": self.mean_hit_rate,
            "rho_hat": self.rho_hat,
            "stopped_at": self.stopped_at,
        }

    def to_json(self) -> dict:
        payload = self.summary()
        payload["records"] = self.records.to_dict(orient="records")
        return payload

    def same_as(self, other: "SessionReport") -> bool:
        return self.summary() == other.summary() and self.records.equals(other.records)
