import click

# 👇 LOCAL APPLICATION IMPORTS
from app.commands.bench import bench
from app.commands.cost import cost
from app.commands.replay import replay
from app.commands.simulate import simulate
from app.commands.sweep import sweep
from app.commands.trace import trace
from app.commands.verify import verify


# ============================================================
# 🛠️ CLI INITIALIZATION
# ============================================================
@click.group()
def cli():
    """Query-aware paged KV-cache simulator."""


cli.add_command(verify)
cli.add_command(sweep)
cli.add_command(simulate)
cli.add_command(cost)
cli.add_command(bench)
cli.add_command(trace)
cli.add_command(replay)


if __name__ == "__main__":
    cli()
