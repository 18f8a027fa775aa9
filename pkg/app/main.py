import click
from dotenv import load_dotenv

load_dotenv()
from app.config import settings  # noqa: E402
from app.routers import compare, estimate, rank, simulate, solve  # noqa: E402
from app.utils.log_utils import configure_logging  # noqa: E402


@click.group()
@click.option(
    "--log-level",
    default=settings.LOG_LEVEL,
    show_default=True,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
)
@click.option("--progress/--no-progress", default=settings.SHOW_PROGRESS, help="Show progress bars on long loops.")
def cli(log_level: str, progress: bool):
    """Estimate marginal treatment effects and design welfare-maximising subsidies."""
    configure_logging(log_level)
    settings.SHOW_PROGRESS = progress


cli.add_command(simulate.simulate)
cli.add_command(estimate.estimate)
cli.add_command(solve.solve)
cli.add_command(compare.compare)
cli.add_command(rank.rank)


if __name__ == "__main__":
    cli()

# Run command
# python -m app.main solve --config configs/wage_subsidy_solve.json --out out/wage_subsidy
