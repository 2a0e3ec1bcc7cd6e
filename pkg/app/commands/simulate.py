import click
import pandas as pd

from ..dependencies import handle_errors, run_options
from ..schemas import RunConfig
from ..utils.report_writer import write_report
from ..workload import simulate_serving


def simulate_frame(cfg: RunConfig) -> pd.DataFrame:
    workload = cfg.workload()
    rows = []
    for kind in cfg.policies:
        m = simulate_serving(workload, cfg.policy_for(kind), cfg.cost_params(), cfg.cache_config())
        rows.append({
            "policy": m.policy,
            "sessions": m.sessions,
            "p50_ms": m.p50_ms,
            "p99_ms": m.p99_ms,
            "throughput": m.throughput_req_s,
            "hit_rate": m.mean_hit_rate,
            "rho_hat": m.rho_hat,
            "mem_fraction": m.mean_memory_fraction,
            "mean_service_ms": m.mean_service_ms,
        })
    return pd.DataFrame(rows)


@click.command("simulate")
@handle_errors
@run_options
def simulate(cfg: RunConfig):
    """Poisson-arrival serving simulation, one row per policy."""
    policies = ", ".join(p.value for p in cfg.policies)
    click.secho(f"🚀 Simulating {cfg.num_sessions} sessions under {policies}", bold=True)
    frame = simulate_frame(cfg)

    # 📊 comparative table
    for row in frame.itertuples(index=False):
        click.echo(f"  {row.policy:<16} p50={row.p50_ms:.4f}ms p99={row.p99_ms:.4f}ms "
                   f"throughput={row.throughput:.3f} req/s service={row.mean_service_ms:.4f}ms "
                   f"hit={row.hit_rate:.4f}")

    if write_report(frame, "tinykv-serving", cfg.format, cfg.out):
        click.echo(f"📊 Metrics written to {cfg.out}")
