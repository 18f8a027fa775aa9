from pathlib import Path
from typing import Optional

import click

import app.controllers.compare as compare_controller
from app.config import settings
from app.middleware.error_middleware import handle_errors
from app.models.model_type import CompareConfig
from app.utils import io_utils


@click.command("compare")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False, path_type=Path))
@handle_errors
def compare(config_path: Path, out_dir: Optional[Path]):
    """Compute the welfare ladder of the four policy classes."""
    config = io_utils.load_config(config_path, CompareConfig)
    summary = compare_controller.run_compare(config, out_dir or Path(settings.OUTPUT_DIR))
    click.echo(io_utils.dumps_json(summary), nl=False)
