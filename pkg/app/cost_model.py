import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetError, DomainError, EmptyPageError
from .models import GapStats, KVPage
from .paged_kv import recompute_metadata
from .schemas import CostParams
from .selection import exact_max_dot, score_page

# log used by the gap bound; the base is not pinned down by the model itself
GAP_BOUND_LOG: Callable[[float], float] = math.log


def _positive(name: str, value: float) -> None:
    if value <= 0:
        raise DomainError(f"{name} must be positive, got {value}")


# ============================================================
# ⏱️ LATENCY
# ============================================================
def attn_cycles(p: CostParams, tokens: float) -> float:
    """τ_attn(n), linear in attended tokens."""
    return p.tau_attn_coeff * tokens


def decode_latency(p: CostParams, P: float, K: float, S: float) -> float:
    if K > P:
        raise BudgetError(f"K={K} selected pages exceeds P={P}")
    if P < 0 or K < 0 or S < 0:
        raise DomainError(f"P, K, S must be non-negative (P={P}, K={K}, S={S})")
    return p.tau_meta * P + p.tau_hb * K * S + attn_cycles(p, K * S)


def speedup_vs_full(p: CostParams, L: int, S: int, K: float) -> float:
    _positive("L", L)
    _positive("S", S)
    P = math.ceil(L / S)
    return decode_latency(p, P, P, S) / decode_latency(p, P, K, S)


# ============================================================
# 💾 MEMORY MOVEMENT
# ============================================================
def load_bytes(p: CostParams, L: float, S: float, K: float) -> float:
    if L < 1 or S < 1:
        raise DomainError(f"load_bytes needs L >= 1 and S >= 1 (L={L}, S={S})")
    return 2.0 * p.m_bytes * (L / S + p.rho * K * S)


def memory_fraction(S: float, K: float, L: float, rho: float) -> float:
    _positive("S", S)
    _positive("K", K)
    _positive("L", L)
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must be in [0, 1], got {rho}")
    return 1.0 / S + rho * K * S / L


@dataclass(frozen=True)
class OptimalPageSize:
    s_star: float
    power_of_two: int


def optimal_page_size(L: float, K: float, rho: float = 1.0) -> OptimalPageSize:
    """Page size minimizing 1/S + ρKS/L, i.e. √(L/(ρK)).

    With the default ρ = 1 this is the familiar √(L/K).
    """
    _positive("K", K)
    if K > L:
        raise BudgetError(f"K={K} exceeds L={L}")
    if not 0.0 < rho <= 1.0:
        raise DomainError(f"rho must be in (0, 1] for a finite optimum, got {rho}")
    s_star = math.sqrt(L / (rho * K))
    return OptimalPageSize(s_star=s_star, power_of_two=2 ** int(math.floor(math.log2(s_star) + 0.5)))


@dataclass(frozen=True)
class OptimumFractions:
    direct: float
    stated: float
    minimum: float


def memory_fraction_at_optimum(K: float, L: float, rho: float) -> OptimumFractions:
    """Memory fraction near the optimum, three ways.

    `direct` substitutes S* into 1/S + ρKS/L, which gives (1+ρ)·√(K/L).
    `stated` is the closed form 2ρ·√(K/L) quoted alongside the model; the two
    disagree and both are reported. `minimum` is the value at the ρ-aware
    optimum √(L/(ρK)), which is 2·√(ρK/L).
    """
    root = math.sqrt(K / L)
    return OptimumFractions(direct=(1.0 + rho) * root, stated=2.0 * rho * root,
                            minimum=2.0 * math.sqrt(rho * K / L))


# ============================================================
# 📐 APPROXIMATION GAP
# ============================================================
def gap_bound(d: int, sigma2: float, S: int) -> float:
    if S < 2:
        raise DomainError(f"gap bound needs S >= 2 so that log S > 0, got S={S}")
    if sigma2 < 0:
        raise DomainError(f"sigma2 must be non-negative, got {sigma2}")
    return (d * sigma2 / S) * math.sqrt(GAP_BOUND_LOG(S))


def empirical_gap(q, page: KVPage) -> float:
    """Bounding-box score minus the true best dot product in the page (>= 0)."""
    if page.length == 0:
        raise EmptyPageError(f"page {page.page_id} is empty")
    return score_page(q, page.meta) - exact_max_dot(q, page.keys)


def gap_stats(gaps, d: int, sigma2: float, S: int) -> GapStats:
    gaps = np.asarray(gaps, dtype=np.float64)
    return GapStats(
        mean_gap=float(gaps.mean()),
        max_gap=float(gaps.max()),
        sigma2=float(sigma2),
        bound=gap_bound(d, sigma2, S),
        samples=int(gaps.size),
    )


def sample_gap_stats(rng: np.random.Generator, n_pages: int, d: int, S: int, sigma2: float) -> GapStats:
    """Gaps over random full pages whose keys have per-dimension variance sigma2."""
    sigma = math.sqrt(sigma2)
    gaps = np.empty(n_pages)
    for i in range(n_pages):
        center = rng.standard_normal(d)
        keys = center + sigma * rng.standard_normal((S, d))
        q = rng.standard_normal(d)
        meta = recompute_metadata(keys)
        gaps[i] = score_page(q, meta) - exact_max_dot(q, keys)
    return gap_stats(gaps, d, sigma2, S)
