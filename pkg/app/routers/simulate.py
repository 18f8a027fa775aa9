from pathlib import Path
from typing import Optional

import click

import app.controllers.simulate as simulate_controller
from app.config import settings
from app.middleware.error_middleware import handle_errors
from app.models.model_type import SimulateConfig
from app.utils import io_utils


@click.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None, help="Override the seed in the config.")
@handle_errors
def simulate(config_path: Path, out_dir: Optional[Path], seed: Optional[int]):
    """Draw a dataset and its true MTE from a selection model."""
    config = io_utils.load_config(config_path, SimulateConfig)
    if seed is not None:
        config = SimulateConfig.model_validate({**config.model_dump(), "seed": seed})
    summary = simulate_controller.run_simulate(config, out_dir or Path(settings.OUTPUT_DIR))
    click.echo(io_utils.dumps_json(summary), nl=False)
