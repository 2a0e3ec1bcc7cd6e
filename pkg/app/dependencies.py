# app/dependencies.py
import functools
import logging

import click

from .config import build_run_config
from .errors import TinyKVError
from .models import OutputFormat


# 🧰 SHARED OPTIONS (every subcommand takes the same config surface)
def run_options(func):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="Flat key=value config file (falls back to $TINYKV_CONFIG).")
    @click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                  help="Override one config key; repeatable.")
    @click.option("--seed", type=int, default=None, help="Top-level seed.")
    @click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file.")
    @click.option("--format", "fmt", type=click.Choice([f.value for f in OutputFormat]), default=None,
                  help="Output format.")
    @click.option("--verbose", is_flag=True, help="Debug logging.")
    @functools.wraps(func)
    def wrapper(config_path, overrides, seed, out, fmt, verbose, **kwargs):
        logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = build_run_config(config_path, overrides, {"seed": seed, "out": out, "format": fmt})
        return func(cfg, **kwargs)

    return wrapper


# 🛡️ THE ERROR BOUNDARY
def handle_errors(func):
    """Turn a TinyKVError into a one-line ❌ message and its exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TinyKVError as exc:
            click.secho(f"❌ {type(exc).__name__}: {exc.detail}", fg="red", err=True)
            raise SystemExit(exc.exit_code)

    return wrapper
