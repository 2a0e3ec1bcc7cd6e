import math

import click
import pandas as pd

from ..cost_model import (
    decode_latency,
    gap_bound,
    load_bytes,
    memory_fraction,
    memory_fraction_at_optimum,
    optimal_page_size,
    speedup_vs_full,
)
from ..dependencies import handle_errors, run_options
from ..schemas import RunConfig
from ..utils.report_writer import write_report


def cost_report(cfg: RunConfig) -> dict:
    p = cfg.cost_params()
    L, S = cfg.cost_tokens, cfg.page_size
    P = math.ceil(L / S)
    # real-valued K for the ratio form, so K·S/L is exactly the ratio
    if cfg.k_pages is not None:
        K = float(min(cfg.k_pages, P))
    elif cfg.budget_tokens is not None:
        K = float(min(math.ceil(cfg.budget_tokens / S), P))
    else:
        K = cfg.k_ratio * P

    frac = memory_fraction(S, K, L, p.rho)
    at_opt = memory_fraction_at_optimum(K, L, p.rho)
    return {
        "L": L,
        "S": S,
        "P": P,
        "K": K,
        "rho": p.rho,
        "decode_latency": decode_latency(p, P, K, S),
        "full_latency": decode_latency(p, P, P, S),
        "speedup_vs_full": speedup_vs_full(p, L, S, K),
        "load_bytes": load_bytes(p, L, S, K),
        "memory_fraction": frac,
        "reduction": 1.0 / frac,
        "s_star": optimal_page_size(L, K).s_star,
        "s_star_rho": optimal_page_size(L, K, p.rho).s_star if p.rho > 0 else math.inf,
        "s_star_pow2": optimal_page_size(L, K).power_of_two,
        "fraction_at_s_star": at_opt.direct,
        "fraction_at_s_star_stated": at_opt.stated,
        "fraction_minimum": at_opt.minimum,
        "gap_bound": gap_bound(cfg.head_dim, cfg.gap_sigma2, S) if S >= 2 else math.nan,
    }


@click.command("cost")
@handle_errors
@run_options
def cost(cfg: RunConfig):
    """Evaluate every analytic cost formula at one operating point."""
    report = cost_report(cfg)
    click.secho(f"📊 Cost model at L={report['L']}, S={report['S']}, K={report['K']:g}, rho={report['rho']:g}",
                bold=True)
    for key, value in report.items():
        click.echo(f"  {key:<26} {value:.6g}")
    if not math.isclose(report["fraction_at_s_star"], report["fraction_at_s_star_stated"]):
        click.secho("⚠️ (1+rho)*sqrt(K/L) and 2*rho*sqrt(K/L) disagree; both reported", fg="yellow")

    frame = pd.DataFrame([report])
    write_report(frame, "tinykv-cost", cfg.format, cfg.out)
