import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .attention import full_attention, output_error, sparse_attention
from .cost_model import decode_latency
from .errors import EmptyInputError, LifecycleError, ShapeError
from .models import STEP_COLUMNS, SelectionResult, SessionReport, StepOutcome, Trace
from .paged_kv import PagedKvCache, new_cache
from .schemas import CacheConfig, CostParams, SelectionPolicy
from .selection import entropy_should_stop, select

logger = logging.getLogger(__name__)


# ============================================================
# 🧵 SESSION STATE
# ============================================================
@dataclass
class Session:
    session_id: int
    cache: PagedKvCache
    prev_selection: Optional[SelectionResult] = None
    stopped: bool = False

    @property
    def step(self) -> int:
        # one appended token per decode step
        return self.cache.total_len


@dataclass(frozen=True)
class EntropyCheck:
    """Early-exit plugin input. Inert when the step has no probability vector."""

    probs: Optional[np.ndarray]
    threshold: float = 0.5


def new_session(session_id: int, config: CacheConfig) -> Session:
    return Session(session_id=session_id, cache=new_cache(config))


# ============================================================
# 📈 REUSE MEASUREMENT
# ============================================================
def page_hit_rate(prev: SelectionResult, cur: SelectionResult) -> float:
    if len(cur) == 0:
        return 0.0
    shared = np.intersect1d(prev.page_ids, cur.page_ids, assume_unique=True).size
    return shared / len(cur)


def estimate_rho(hit_rates: Sequence[float]) -> float:
    rates = np.asarray(hit_rates, dtype=np.float64)
    if rates.size == 0:
        raise EmptyInputError("no hit rates to estimate rho from")
    return float(rates.mean())


# ============================================================
# 🚀 DECODE STEP
# ============================================================
def decode_step(
    session: Session,
    q,
    k_new,
    v_new,
    policy: SelectionPolicy,
    cost: CostParams,
    entropy_cfg: Optional[EntropyCheck] = None,
    shadow: bool = False,
    scaled: bool = False,
) -> StepOutcome:
    """One decode step: append, score pages, top-K, gather, attend."""
    if session.stopped:
        raise LifecycleError(f"session {session.session_id} stopped early at step {session.step}")
    cache = session.cache
    q = np.asarray(q, dtype=cache.config.dtype)
    if q.shape != (cache.d,):
        raise ShapeError(f"q has shape {q.shape}, expected ({cache.d},)")

    # 1. Store the new token
    cache.append(k_new, v_new)

    # 2. Score + select + gather + attend
    sel = select(policy, q, cache, session.prev_selection)
    out = sparse_attention(q, cache, sel, scaled=scaled)

    # 3. Bookkeeping
    cycles = decode_latency(cost, cache.page_count, len(sel), cache.page_size)
    hit = page_hit_rate(session.prev_selection, sel) if session.prev_selection is not None else 0.0
    session.prev_selection = sel

    err = None
    if shadow:
        err = output_error(out.o, full_attention(q, cache, scaled=scaled).o)

    # 4. Plugins
    stopped = False
    if entropy_cfg is not None and entropy_cfg.probs is not None:
        if entropy_should_stop(entropy_cfg.probs, entropy_cfg.threshold):
            stopped = True
            session.stopped = True
            logger.info("session %d: entropy early exit at step %d", session.session_id, session.step)

    return StepOutcome(output=out, selection=sel, simulated_cycles=cycles, hit_rate=hit,
                       stopped_early=stopped, out_err=err)


# ============================================================
# 🎬 SESSION DRIVER
# ============================================================
def run_session(
    trace: Trace,
    policy: SelectionPolicy,
    cost: CostParams,
    cache_config: Optional[CacheConfig] = None,
    shadow: bool = False,
    entropy_threshold: Optional[float] = None,
    warmup_steps: int = 0,
    session_id: int = 0,
    scaled: bool = False,
) -> SessionReport:
    """Replay a trace through `decode_step` and summarize it.

    Hit-rate means and ρ̂ skip the first `warmup_steps` steps when the session
    is longer than that.
    """
    if len(trace) == 0:
        raise EmptyInputError("trace has no events")
    config = cache_config or CacheConfig(d=trace.d)
    if config.d != trace.d:
        raise ShapeError(f"trace dimension {trace.d} does not match cache dimension {config.d}")
    session = new_session(session_id, config)

    pages_total: List[int] = []
    pages_selected: List[int] = []
    hits: List[float] = []
    cycles: List[float] = []
    errs: List[float] = []
    stopped_at = None

    for t in range(len(trace)):
        ev = trace.event(t)
        for name, vec in (("q", ev.q), ("k", ev.k), ("v", ev.v)):
            if np.shape(vec) != (trace.d,):
                raise ShapeError(f"step {t}: {name} has shape {np.shape(vec)}, expected ({trace.d},)")
        entropy_cfg = None
        if entropy_threshold is not None:
            entropy_cfg = EntropyCheck(probs=ev.probs, threshold=entropy_threshold)

        outcome = decode_step(session, ev.q, ev.k, ev.v, policy, cost,
                              entropy_cfg=entropy_cfg, shadow=shadow, scaled=scaled)
        pages_total.append(session.cache.page_count)
        pages_selected.append(len(outcome.selection))
        hits.append(outcome.hit_rate)
        cycles.append(outcome.simulated_cycles)
        errs.append(outcome.out_err if outcome.out_err is not None else np.nan)
        if outcome.stopped_early:
            stopped_at = t
            break

    records = pd.DataFrame({
        "step": np.arange(len(cycles), dtype=np.int64),
        "policy": policy.label,
        "pages_total": np.asarray(pages_total, dtype=np.int64),
        "pages_selected": np.asarray(pages_selected, dtype=np.int64),
        "hit_rate": np.asarray(hits, dtype=np.float64),
        "sim_cycles": np.asarray(cycles, dtype=np.float64),
        "out_err": np.asarray(errs, dtype=np.float64),
    }, columns=STEP_COLUMNS)

    measured = hits[warmup_steps:] if len(hits) > warmup_steps else hits
    cyc = np.asarray(cycles)
    return SessionReport(
        session_id=session_id,
        policy=policy.label,
        records=records,
        mean_out_err=float(np.mean(errs)) if shadow else None,
        mean_cycles=float(cyc.mean()),
        p50_cycles=float(np.percentile(cyc, 50)),
        p99_cycles=float(np.percentile(cyc, 99)),
        final_cycles=float(cyc[-1]),
        total_cycles=float(cyc.sum()),
        mean_hit_rate=float(np.mean(measured)),
        rho_hat=estimate_rho(measured),
        stopped_at=stopped_at,
    )
