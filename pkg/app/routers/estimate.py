from pathlib import Path
from typing import Optional

import click

import app.controllers.estimate as estimate_controller
from app.config import settings
from app.middleware.error_middleware import handle_errors
from app.models.model_type import EstimateConfig
from app.utils import io_utils


@click.command("estimate")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False, path_type=Path))
@handle_errors
def estimate(config_path: Path, out_dir: Optional[Path]):
    """Fit the choice equation and the requested MTE estimators on a dataset."""
    config = io_utils.load_config(config_path, EstimateConfig)
    summary = estimate_controller.run_estimate(config, out_dir or Path(settings.OUTPUT_DIR))
    click.echo(io_utils.dumps_json(summary), nl=False)
