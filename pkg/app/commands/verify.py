import json
from pathlib import Path

import click

from ..dependencies import handle_errors, run_options
from ..errors import VerificationError
from ..schemas import RunConfig
from ..verification import run_suites


@click.command("verify")
@handle_errors
@run_options
def verify(cfg: RunConfig):
    """Run the invariant suites; exit 1 if any fails."""
    click.secho(f"🚀 Running invariant suites (seed={cfg.seed})", bold=True)
    results = run_suites(cfg)

    for r in results:
        if r.passed:
            click.secho(f"✅ {r.name}: {r.detail} ({r.elapsed_s:.2f}s)", fg="green")
        else:
            click.secho(f"❌ {r.name}: {r.detail}", fg="red")

    if cfg.out:
        report = {"seed": cfg.seed, "passed": all(r.passed for r in results),
                  "suites": [r.to_json() for r in results]}
        Path(cfg.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        click.echo(f"📊 Report written to {cfg.out}")

    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationError(f"failing properties: {', '.join(failed)}")
