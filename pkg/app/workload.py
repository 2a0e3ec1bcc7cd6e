import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import simpy
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .attention import stable_softmax
from .cost_model import memory_fraction
from .engine import run_session
from .errors import ConfigError, SimulationError, TraceFormatError, TraceParseError
from .models import SessionReport, Trace, TraceMode
from .schemas import AggregateMetrics, CacheConfig, CostParams, SelectionPolicy, TraceKnobs, WorkloadConfig
from .utils.seeding import RNG_ALGORITHM, derive_seed, make_rng

logger = logging.getLogger(__name__)

TRACE_FORMAT = "tinykv-trace"
TRACE_VERSION = 1


# ============================================================
# 🧪 SYNTHETIC TRACES
# ============================================================
def _probs(rng: np.random.Generator, steps: int, knobs: TraceKnobs) -> List[np.ndarray]:
    logits = knobs.probs_sharpness * rng.standard_normal((steps, knobs.probs_width))
    return [stable_softmax(row) for row in logits]


def _gaussian(rng, steps, d, knobs):
    return rng.standard_normal((steps, d)), rng.standard_normal((steps, d))


def _clustered(rng, steps, d, knobs):
    # keys stay on one cluster for a segment, so pages are mostly single-cluster
    centers = rng.standard_normal((knobs.cluster_count, d))
    segments = -(-steps // knobs.segment_tokens)
    seg_cluster = rng.integers(0, knobs.cluster_count, size=segments)
    key_cluster = np.repeat(seg_cluster, knobs.segment_tokens)[:steps]
    keys = centers[key_cluster] + knobs.cluster_spread * rng.standard_normal((steps, d))

    q_cluster = rng.integers(0, knobs.cluster_count, size=steps)
    local = rng.random(steps) < knobs.query_locality
    queries = np.where(
        local[:, None],
        centers[q_cluster] + knobs.cluster_spread * rng.standard_normal((steps, d)),
        rng.standard_normal((steps, d)),
    )
    return queries, keys


def _drifting(rng, steps, d, knobs):
    walk = np.cumsum(knobs.drift_step * rng.standard_normal((steps, d)), axis=0)
    centers = rng.standard_normal(d) + walk
    keys = centers + knobs.cluster_spread * rng.standard_normal((steps, d))
    queries = centers + knobs.cluster_spread * rng.standard_normal((steps, d))
    return queries, keys


def _repetition(rng, steps, d, knobs):
    pattern = rng.standard_normal((knobs.repeat_period, d))
    reps = -(-steps // knobs.repeat_period)
    base = np.tile(pattern, (reps, 1))[:steps]
    keys = base + 0.01 * rng.standard_normal((steps, d))
    # each query looks for the next token of the pattern
    queries = np.roll(base, -1, axis=0) + knobs.cluster_spread * rng.standard_normal((steps, d))
    return queries, keys


GENERATORS = {
    TraceMode.GAUSSIAN: _gaussian,
    TraceMode.CLUSTERED: _clustered,
    TraceMode.DRIFTING: _drifting,
    TraceMode.REPETITION: _repetition,
}


def gen_trace(mode: Union[TraceMode, str], seed: int, steps: int, d: int,
              knobs: Optional[TraceKnobs] = None) -> Trace:
    try:
        mode = TraceMode(mode)
    except ValueError as e:
        raise ConfigError(f"unknown trace mode {mode!r}") from e
    if mode not in GENERATORS:
        raise ConfigError(f"trace mode {mode.value!r} cannot be generated (read it from a file)")
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if d < 1:
        raise ConfigError(f"d must be >= 1, got {d}")
    knobs = knobs or TraceKnobs()

    rng = make_rng(seed)
    queries, keys = GENERATORS[mode](rng, steps, d, knobs)
    values = rng.standard_normal((steps, d))
    probs = _probs(rng, steps, knobs) if knobs.with_probs else None
    header = {"rng": RNG_ALGORITHM, "seed": int(seed), "mode": mode.value}
    return Trace(d=d, q=np.ascontiguousarray(queries), k=np.ascontiguousarray(keys), v=values,
                 probs=probs, header=header)


# ============================================================
# 📄 TRACE FILES (line-delimited JSON)
# ============================================================
class TraceHeader(BaseModel):
    model_config = ConfigDict(extra="allow")

    format: str
    version: int
    d: int = Field(ge=1)


class TraceLine(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q: List[float]
    k: List[float]
    v: List[float]
    probs: Optional[List[float]] = None


def write_trace(trace: Trace, path: Union[str, Path]) -> None:
    header = {"format": TRACE_FORMAT, "version": TRACE_VERSION, "d": trace.d}
    header.update({k: v for k, v in trace.header.items() if k not in header})
    header.setdefault("rng", RNG_ALGORITHM)
    lines = [json.dumps(header)]
    for ev in trace.events:
        row = {"q": ev.q.tolist(), "k": ev.k.tolist(), "v": ev.v.tolist()}
        if ev.probs is not None:
            row["probs"] = np.asarray(ev.probs).tolist()
        lines.append(json.dumps(row))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write trace file {path}: {e.strerror or e}") from e


def _decode_lines(raw: bytes) -> List[str]:
    lines = []
    for lineno, chunk in enumerate(raw.splitlines(), start=1):
        try:
            lines.append(chunk.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise TraceParseError(f"not UTF-8 text ({e.reason})", line=lineno) from e
    return lines


def read_trace(path: Union[str, Path]) -> Trace:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read trace file {path}: {e.strerror or e}") from e
    lines = _decode_lines(raw)
    if not lines or not lines[0].strip():
        raise TraceFormatError("missing header")

    try:
        header = TraceHeader.model_validate(json.loads(lines[0]))
    except (json.JSONDecodeError, ValidationError) as e:
        raise TraceParseError(f"bad header: {e}", line=1) from e
    if header.format != TRACE_FORMAT or header.version != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace {header.format!r} v{header.version}", line=1)
    d = header.d

    qs, ks, vs, probs = [], [], [], []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            row = TraceLine.model_validate(json.loads(text))
        except (json.JSONDecodeError, ValidationError) as e:
            raise TraceParseError(str(e).splitlines()[0], line=lineno) from e
        for name in ("q", "k", "v"):
            if len(getattr(row, name)) != d:
                raise TraceFormatError(f"{name} has {len(getattr(row, name))} elements, header says d={d}",
                                       line=lineno)
        if row.probs is not None and abs(math.fsum(row.probs) - 1.0) > 1e-9:
            raise TraceFormatError("probs does not sum to 1", line=lineno)
        qs.append(row.q)
        ks.append(row.k)
        vs.append(row.v)
        probs.append(np.asarray(row.probs, dtype=np.float64) if row.probs is not None else None)
    if not qs:
        raise TraceFormatError("trace has a header but no events")

    extra = {k: v for k, v in header.model_dump().items() if k not in ("format", "version", "d")}
    return Trace(
        d=d,
        q=np.asarray(qs, dtype=np.float64).reshape(-1, d),
        k=np.asarray(ks, dtype=np.float64).reshape(-1, d),
        v=np.asarray(vs, dtype=np.float64).reshape(-1, d),
        probs=probs if any(p is not None for p in probs) else None,
        header=extra,
    )


# ============================================================
# 🕒 ARRIVALS
# ============================================================
def poisson_arrivals(mean_interarrival_ms: float, n: int, seed: int) -> np.ndarray:
    if mean_interarrival_ms <= 0:
        raise ConfigError(f"mean inter-arrival must be positive, got {mean_interarrival_ms}")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    gaps = make_rng(seed).exponential(mean_interarrival_ms, size=n)
    times = np.cumsum(gaps)
    # a zero gap would tie two arrivals
    for i in range(n):
        floor = times[i - 1] if i else 0.0
        if times[i] <= floor:
            times[i] = np.nextafter(floor, np.inf)
    return times


# ============================================================
# 🏭 SERVING SIMULATOR
# ============================================================
def _session_trace(cfg: WorkloadConfig, session_id: int, tokens: int, d: int,
                   file_trace: Optional[Trace]) -> Trace:
    if file_trace is not None:
        n = min(tokens, len(file_trace))
        probs = file_trace.probs[:n] if file_trace.probs is not None else None
        return Trace(d=file_trace.d, q=file_trace.q[:n], k=file_trace.k[:n], v=file_trace.v[:n],
                     probs=probs, header=file_trace.header)
    return gen_trace(cfg.trace_mode, derive_seed(cfg.seed, "trace", session_id), tokens, d, cfg.knobs)


def run_sessions(cfg: WorkloadConfig, policy: SelectionPolicy, cost: CostParams,
                 cache_config: CacheConfig) -> List[SessionReport]:
    """Decode every session's trace. Results come back ordered by session id."""
    low, high = cfg.tokens_per_request
    lengths = make_rng(derive_seed(cfg.seed, "lengths")).integers(low, high + 1, size=cfg.num_sessions)
    file_trace = read_trace(cfg.trace_path) if cfg.trace_mode == TraceMode.FILE else None
    if file_trace is not None and file_trace.d != cache_config.d:
        raise ConfigError(f"trace file has d={file_trace.d}, cache expects d={cache_config.d}")

    def one(session_id: int) -> SessionReport:
        trace = _session_trace(cfg, session_id, int(lengths[session_id]), cache_config.d, file_trace)
        return run_session(trace, policy, cost, cache_config=cache_config,
                           entropy_threshold=cfg.entropy_threshold,
                           warmup_steps=cfg.warmup_steps, session_id=session_id)

    ids = range(cfg.num_sessions)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(one, ids))
    return [one(i) for i in ids]


def _serve(env: simpy.Environment, server: simpy.Resource, arrival: float, service: float,
           done: List[Optional[float]], session_id: int):
    yield env.timeout(arrival)
    with server.request() as slot:
        yield slot
        yield env.timeout(service)
    done[session_id] = env.now


def simulate_serving(cfg: WorkloadConfig, policy: SelectionPolicy, cost: CostParams,
                     cache_config: Optional[CacheConfig] = None) -> AggregateMetrics:
    cache_config = cache_config or CacheConfig()
    n = cfg.num_sessions
    arrivals = poisson_arrivals(cfg.mean_interarrival_ms, n, derive_seed(cfg.seed, "arrivals"))
    reports = run_sessions(cfg, policy, cost, cache_config)
    service_ms = [r.total_cycles * cfg.cycles_to_ms for r in reports]

    # 1. Replay arrivals against the decode slots in simulated time
    env = simpy.Environment()
    server = simpy.Resource(env, capacity=cfg.max_concurrency)
    done: List[Optional[float]] = [None] * n
    for i in range(n):
        env.process(_serve(env, server, float(arrivals[i]), service_ms[i], done, i))
    env.run()

    # 2. Every request must finish exactly once
    if any(t is None for t in done):
        raise SimulationError(f"{sum(t is None for t in done)} of {n} requests never completed")
    latencies = np.asarray(done) - arrivals
    makespan = float(max(done))

    # 3. Reuse + memory, pooled over post-warm-up steps of every session
    hits, fractions = [], []
    for r in reports:
        rec = r.records
        measured = rec.iloc[cfg.warmup_steps:] if len(rec) > cfg.warmup_steps else rec
        hits.append(measured["hit_rate"].to_numpy())
    rho_hat = float(np.concatenate(hits).mean())
    for r in reports:
        rec = r.records
        tokens = rec["step"].to_numpy() + 1
        for sel, L in zip(rec["pages_selected"].to_numpy(), tokens):
            fractions.append(memory_fraction(cache_config.page_size, int(sel), int(L), rho_hat))

    metrics = AggregateMetrics(
        policy=policy.label,
        sessions=n,
        p50_ms=float(np.percentile(latencies, 50)),
        p99_ms=float(np.percentile(latencies, 99)),
        throughput_req_s=n / (makespan / 1000.0),
        mean_hit_rate=rho_hat,
        rho_hat=rho_hat,
        mean_memory_fraction=float(np.mean(fractions)),
        makespan_ms=makespan,
        mean_service_ms=float(np.mean(service_ms)),
    )
    logger.info("simulated %d sessions under %s: p50=%.4f ms", n, policy.label, metrics.p50_ms)
    return metrics
