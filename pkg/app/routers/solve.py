from pathlib import Path
from typing import Optional

import click

import app.controllers.solve as solve_controller
from app.config import settings
from app.middleware.error_middleware import handle_errors
from app.models.model_type import SolveConfig
from app.utils import io_utils


@click.command("solve")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False, path_type=Path))
@handle_errors
def solve(config_path: Path, out_dir: Optional[Path]):
    """Solve for the welfare-maximising subsidy in every cell."""
    config = io_utils.load_config(config_path, SolveConfig)
    summary = solve_controller.run_solve(config, out_dir or Path(settings.OUTPUT_DIR))
    click.echo(io_utils.dumps_json(summary), nl=False)
