import time

import click
import numpy as np
import pandas as pd

from ..attention import sparse_attention
from ..dependencies import handle_errors, run_options
from ..paged_kv import gather, new_cache
from ..schemas import RunConfig
from ..selection import score_all, select
from ..utils.report_writer import render, write_report
from ..utils.seeding import derive_seed, make_rng


def _time_us(fn, repeats: int) -> np.ndarray:
    samples = np.empty(repeats)
    for i in range(repeats):
        started = time.perf_counter()
        fn()
        samples[i] = (time.perf_counter() - started) * 1e6
    return samples


def bench_frame(cfg: RunConfig) -> pd.DataFrame:
    """Wall-clock timings of the decode hot path. Informational only."""
    rng = make_rng(derive_seed(cfg.seed, "bench"))
    d = cfg.head_dim
    cache = new_cache(cfg.cache_config())
    cache.extend(rng.standard_normal((cfg.bench_tokens, d)), rng.standard_normal((cfg.bench_tokens, d)))
    q = rng.standard_normal(d)
    sel = select(cfg.policy_for(), q, cache)

    ops = {
        "score_all": lambda: score_all(q, cache),
        "gather": lambda: gather(cache, sel.page_ids),
        "sparse_attention": lambda: sparse_attention(q, cache, sel, scaled=cfg.scaled_logits),
    }
    rows = []
    for name, fn in ops.items():
        samples = _time_us(fn, cfg.bench_repeats)
        rows.append({"op": name, "tokens": cache.total_len, "pages": cache.page_count,
                     "mean_us": float(samples.mean()), "min_us": float(samples.min())})
    return pd.DataFrame(rows)


@click.command("bench")
@handle_errors
@run_options
def bench(cfg: RunConfig):
    """Micro-timing of score_all, gather and sparse_attention."""
    click.secho(f"🚀 Timing hot path over {cfg.bench_tokens} tokens ({cfg.bench_repeats} repeats)", bold=True)
    frame = bench_frame(cfg)
    if write_report(frame, "tinykv-bench", cfg.format, cfg.out):
        click.echo(f"📊 Timings written to {cfg.out}")
    else:
        click.echo(render(frame, "tinykv-bench", cfg.format), nl=False)
