import click
import pandas as pd

from ..cost_model import memory_fraction
from ..dependencies import handle_errors, run_options
from ..engine import run_session
from ..errors import ConfigError
from ..models import PolicyKind
from ..schemas import RunConfig
from ..utils.report_writer import render, write_report
from ..utils.seeding import derive_seed
from ..workload import gen_trace, read_trace


def sweep_frame(cfg: RunConfig) -> pd.DataFrame:
    """Page-size x budget grid on one fixed trace, shadow oracle on."""
    if not cfg.sweep_page_sizes or not cfg.sweep_ratios:
        raise ConfigError("sweep grid is empty (sweep_page_sizes and sweep_ratios need at least one value)")

    # 1. One trace for every grid point
    if cfg.trace_path:
        trace = read_trace(cfg.trace_path)
    else:
        trace = gen_trace(cfg.trace_mode, derive_seed(cfg.seed, "sweep"), cfg.sweep_steps, cfg.head_dim,
                          cfg.trace_knobs())

    rows = []
    for S in cfg.sweep_page_sizes:
        for ratio in cfg.sweep_ratios:
            # 2. Replay under QueryAwareTopK at this (S, ratio)
            report = run_session(trace, cfg.policy_for(PolicyKind.QUERY_AWARE_TOP_K, k_ratio=ratio),
                                 cfg.cost_params(), cache_config=cfg.cache_config(page_size=S),
                                 shadow=True, warmup_steps=cfg.warmup_steps, scaled=cfg.scaled_logits)
            last = report.records.iloc[-1]
            rows.append({
                "S": S,
                "k_ratio": ratio,
                "mean_out_err": report.mean_out_err,
                "sim_cycles": report.final_cycles,
                "mean_cycles": report.mean_cycles,
                "hit_rate": report.mean_hit_rate,
                "mem_fraction": memory_fraction(S, int(last["pages_selected"]), report.steps, report.rho_hat),
            })
    return pd.DataFrame(rows)


@click.command("sweep")
@handle_errors
@run_options
def sweep(cfg: RunConfig):
    """Page-size / budget-ratio sweep."""
    click.secho(f"🚀 Sweeping S={cfg.sweep_page_sizes} x k_ratio={cfg.sweep_ratios}", bold=True)
    frame = sweep_frame(cfg)
    if write_report(frame, "tinykv-sweep", cfg.format, cfg.out):
        click.echo(f"📊 Sweep written to {cfg.out}")
    else:
        click.echo(render(frame, "tinykv-sweep", cfg.format), nl=False)
