import click

from ..dependencies import handle_errors, run_options
from ..errors import ConfigError
from ..schemas import RunConfig
from ..workload import gen_trace, write_trace


@click.command("trace")
@handle_errors
@run_options
def trace(cfg: RunConfig):
    """Write a generated trace file (needs --out)."""
    if not cfg.out:
        raise ConfigError("trace needs an output path (--out)")
    generated = gen_trace(cfg.trace_mode, cfg.seed, cfg.trace_steps, cfg.head_dim, cfg.trace_knobs())
    write_trace(generated, cfg.out)
    click.secho(f"✅ {len(generated)} {cfg.trace_mode.value} steps (d={cfg.head_dim}) written to {cfg.out}",
                fg="green")
