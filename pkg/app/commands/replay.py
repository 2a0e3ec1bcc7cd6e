import click

from ..dependencies import handle_errors, run_options
from ..engine import run_session
from ..schemas import RunConfig
from ..utils.report_writer import write_report
from ..workload import gen_trace, read_trace


@click.command("replay")
@handle_errors
@run_options
def replay(cfg: RunConfig):
    """One session under the configured policy, with the shadow oracle."""
    if cfg.trace_path:
        source = read_trace(cfg.trace_path)
    else:
        source = gen_trace(cfg.trace_mode, cfg.seed, cfg.trace_steps, cfg.head_dim, cfg.trace_knobs())
    report = run_session(source, cfg.policy_for(), cfg.cost_params(), cache_config=cfg.cache_config(),
                         shadow=True, entropy_threshold=cfg.entropy_threshold if cfg.with_probs else None,
                         warmup_steps=cfg.warmup_steps, scaled=cfg.scaled_logits)

    click.secho(f"📊 {report.policy}: {report.steps} steps, mean err {report.mean_out_err:.3e}, "
                f"mean cycles {report.mean_cycles:.1f}, hit rate {report.mean_hit_rate:.4f}", bold=True)
    if report.stopped_at is not None:
        click.secho(f"⚠️ Entropy early exit at step {report.stopped_at}", fg="yellow")

    if write_report(report.records, "tinykv-steps", cfg.format, cfg.out, extra={"summary": report.summary()}):
        click.echo(f"📊 Steps written to {cfg.out}")
