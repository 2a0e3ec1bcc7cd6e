from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import OutputFormat, PolicyKind, TraceMode


def _check_precision(value: int) -> int:
    if value not in (32, 64):
        raise ValueError("precision must be 32 or 64")
    return value


# --- CACHE SCHEMAS ---

class CacheConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    d: int = Field(64, ge=1, description="head dimension")
    page_size: int = Field(16, ge=1, description="tokens per page (S)")
    precision: int = 64

    @field_validator("precision")
    @classmethod
    def _float_width(cls, value):
        return _check_precision(value)

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self.precision == 32 else np.float64)


# --- SELECTION SCHEMAS ---

class SelectionPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    # strategy name; the built-ins are the PolicyKind values, others come from register_strategy
    kind: str = PolicyKind.QUERY_AWARE_TOP_K.value
    # QueryAwareTopK budget: k_pages wins over budget_tokens, which wins over k_ratio
    k_pages: Optional[int] = Field(None, ge=1)
    budget_tokens: Optional[int] = Field(None, ge=1)
    k_ratio: float = Field(0.3, gt=0.0, le=1.0)
    # StreamingWindow
    window_tokens: int = Field(2048, ge=1)
    sink_pages: int = Field(0, ge=0)
    # SoftPrune
    weight_threshold: float = Field(0.1, ge=0.0, lt=1.0)

    @field_validator("kind", mode="before")
    @classmethod
    def _strategy_name(cls, value):
        if isinstance(value, PolicyKind):
            return value.value
        if not isinstance(value, str) or not value.strip():
            raise ValueError("kind must be a non-empty strategy name")
        return value.strip()

    @property
    def label(self) -> str:
        return self.kind


# --- COST SCHEMAS ---

class CostParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau_meta: float = Field(1.0, ge=0.0)
    tau_hb: float = Field(4.0, ge=0.0)
    tau_attn_coeff: float = Field(1.0, ge=0.0)
    m_bytes: float = Field(128.0, ge=0.0)
    rho: float = Field(0.2, ge=0.0, le=1.0)


# --- WORKLOAD SCHEMAS ---

class TraceKnobs(BaseModel):
    model_config = ConfigDict(frozen=True)

    cluster_count: int = Field(4, ge=1)
    query_locality: float = Field(0.95, ge=0.0, le=1.0)
    segment_tokens: int = Field(32, ge=1)
    cluster_spread: float = Field(0.25, ge=0.0)
    drift_step: float = Field(0.05, ge=0.0)
    repeat_period: int = Field(9, ge=1)
    with_probs: bool = False
    probs_width: int = Field(16, ge=2)
    probs_sharpness: float = Field(3.0, ge=0.0)


class WorkloadConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    num_sessions: int = Field(512, ge=1)
    mean_interarrival_ms: float = Field(50.0, gt=0.0)
    tokens_min: int = Field(100, ge=1)
    tokens_max: int = Field(500, ge=1)
    seed: int = Field(42, ge=0, lt=2**64)
    trace_mode: TraceMode = TraceMode.CLUSTERED
    trace_path: Optional[str] = None
    knobs: TraceKnobs = TraceKnobs()
    cycles_to_ms: float = Field(1e-5, gt=0.0)
    max_concurrency: int = Field(512, ge=1)
    warmup_steps: int = Field(64, ge=0)
    workers: int = Field(1, ge=1)
    entropy_threshold: Optional[float] = Field(None, ge=0.0)

    @model_validator(mode="after")
    def _check_range(self):
        if self.tokens_min > self.tokens_max:
            raise ValueError("tokens_min must be <= tokens_max")
        if self.trace_mode == TraceMode.FILE and not self.trace_path:
            raise ValueError("trace_mode=file needs trace_path")
        return self

    @property
    def tokens_per_request(self) -> Tuple[int, int]:
        """Inclusive request-length range."""
        return (self.tokens_min, self.tokens_max)


class AggregateMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    policy: str
    sessions: int
    p50_ms: float = Field(ge=0.0)
    p99_ms: float = Field(ge=0.0)
    throughput_req_s: float = Field(ge=0.0)
    mean_hit_rate: float = Field(ge=0.0, le=1.0)
    rho_hat: float = Field(ge=0.0, le=1.0)
    mean_memory_fraction: float = Field(ge=0.0)
    makespan_ms: float = Field(ge=0.0)
    # mean per-request decode time, queueing excluded
    mean_service_ms: float = Field(0.0, ge=0.0)


# --- RUN CONFIG (flat key=value file) ---

def _split_list(value):
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(42, ge=0, lt=2**64)
    out: Optional[str] = None
    format: OutputFormat = OutputFormat.CSV

    # cache
    head_dim: int = Field(64, ge=1)
    page_size: int = Field(16, ge=1)
    precision: int = 64
    scaled_logits: bool = False

    # selection
    policy: PolicyKind = PolicyKind.QUERY_AWARE_TOP_K
    k_ratio: float = Field(0.3, gt=0.0, le=1.0)
    k_pages: Optional[int] = Field(None, ge=1)
    budget_tokens: Optional[int] = Field(None, ge=1)
    window_tokens: int = Field(2048, ge=1)
    sink_pages: int = Field(0, ge=0)
    weight_threshold: float = Field(0.1, ge=0.0, lt=1.0)
    entropy_threshold: float = Field(0.5, ge=0.0)

    # cost model
    tau_meta: float = Field(1.0, ge=0.0)
    tau_hb: float = Field(4.0, ge=0.0)
    tau_attn_coeff: float = Field(1.0, ge=0.0)
    m_bytes: float = Field(128.0, ge=0.0)
    rho: float = Field(0.2, ge=0.0, le=1.0)
    cost_tokens: int = Field(32768, ge=1)
    gap_sigma2: float = Field(1.0, ge=0.0)

    # workload
    num_sessions: int = Field(512, ge=1)
    mean_interarrival_ms: float = Field(50.0, gt=0.0)
    tokens_min: int = Field(100, ge=1)
    tokens_max: int = Field(500, ge=1)
    trace_mode: TraceMode = TraceMode.CLUSTERED
    trace_path: Optional[str] = None
    cluster_count: int = Field(4, ge=1)
    query_locality: float = Field(0.95, ge=0.0, le=1.0)
    segment_tokens: int = Field(32, ge=1)
    with_probs: bool = False
    cycles_to_ms: float = Field(1e-5, gt=0.0)
    max_concurrency: int = Field(512, ge=1)
    warmup_steps: int = Field(64, ge=0)
    workers: int = Field(1, ge=1)
    trace_steps: int = Field(512, ge=1)

    # simulate / sweep
    policies: List[PolicyKind] = [PolicyKind.FULL_CACHE, PolicyKind.QUERY_AWARE_TOP_K]
    sweep_page_sizes: List[int] = [4, 8, 16, 32, 64]
    sweep_ratios: List[float] = [0.1, 0.2, 0.3, 0.5]
    sweep_steps: int = Field(4096, ge=1)

    # verify / bench
    verify_trials: int = Field(10000, ge=1)
    verify_caches: int = Field(1000, ge=1)
    verify_corrupt_metadata: bool = False
    bench_tokens: int = Field(4096, ge=1)
    bench_repeats: int = Field(50, ge=1)

    @field_validator("policies", "sweep_page_sizes", "sweep_ratios", mode="before")
    @classmethod
    def _comma_lists(cls, value):
        return _split_list(value)

    @field_validator("precision")
    @classmethod
    def _float_width(cls, value):
        return _check_precision(value)

    @field_validator("trace_path", "out", mode="before")
    @classmethod
    def _blank_is_none(cls, value):
        return None if value == "" else value

    @model_validator(mode="after")
    def _check_range(self):
        if self.tokens_min > self.tokens_max:
            raise ValueError("tokens_min must be <= tokens_max")
        return self

    def cache_config(self, page_size: Optional[int] = None) -> CacheConfig:
        return CacheConfig(d=self.head_dim, page_size=page_size or self.page_size, precision=self.precision)

    def policy_for(self, kind: Optional[PolicyKind] = None, k_ratio: Optional[float] = None) -> SelectionPolicy:
        return SelectionPolicy(
            kind=kind or self.policy,
            k_pages=self.k_pages,
            budget_tokens=self.budget_tokens,
            k_ratio=k_ratio if k_ratio is not None else self.k_ratio,
            window_tokens=self.window_tokens,
            sink_pages=self.sink_pages,
            weight_threshold=self.weight_threshold,
        )

    def cost_params(self) -> CostParams:
        return CostParams(
            tau_meta=self.tau_meta,
            tau_hb=self.tau_hb,
            tau_attn_coeff=self.tau_attn_coeff,
            m_bytes=self.m_bytes,
            rho=self.rho,
        )

    def trace_knobs(self) -> TraceKnobs:
        return TraceKnobs(
            cluster_count=self.cluster_count,
            query_locality=self.query_locality,
            segment_tokens=self.segment_tokens,
            with_probs=self.with_probs,
        )

    def workload(self) -> WorkloadConfig:
        return WorkloadConfig(
            num_sessions=self.num_sessions,
            mean_interarrival_ms=self.mean_interarrival_ms,
            tokens_min=self.tokens_min,
            tokens_max=self.tokens_max,
            seed=self.seed,
            trace_mode=self.trace_mode,
            trace_path=self.trace_path,
            knobs=self.trace_knobs(),
            cycles_to_ms=self.cycles_to_ms,
            max_concurrency=self.max_concurrency,
            warmup_steps=self.warmup_steps,
            workers=self.workers,
            entropy_threshold=self.entropy_threshold if self.with_probs else None,
        )
