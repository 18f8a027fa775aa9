from pathlib import Path
from typing import Optional

import click

import app.controllers.rank as rank_controller
from app.config import settings
from app.middleware.error_middleware import handle_errors
from app.models.model_type import RankConfig
from app.utils import io_utils


@click.command("rank")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False, path_type=Path))
@handle_errors
def rank(config_path: Path, out_dir: Optional[Path]):
    """Partially rank subsidy rules over an identified MTE set."""
    config = io_utils.load_config(config_path, RankConfig)
    summary = rank_controller.run_rank(config, out_dir or Path(settings.OUTPUT_DIR))
    click.echo(io_utils.dumps_json(summary), nl=False)
