import functools
import json
import sys
from typing import Any, Callable, Dict

import click
from pydantic import ValidationError

from app.exceptions import EXIT_COMPUTATION, EXIT_SCHEMA, SubsidyError
from app.utils.log_utils import get_logger

logger = get_logger("CLI")


def error_payload(exc: BaseException) -> Dict[str, Any]:
    """
    Structured one-line description of a failure.

    Pydantic validation failures become schema errors listing each offending field;
    anything that is not a SubsidyError is reported as a computation error.
    """
    if isinstance(exc, SubsidyError):
        return exc.to_dict()
    if isinstance(exc, ValidationError):
        fields = [
            {"loc": ".".join(str(part) for part in err["loc"]), "msg": err["msg"]} for err in exc.errors()
        ]
        return {
            "error": "schema_error",
            "message": f"{exc.error_count()} invalid field(s) in {exc.title}",
            "exit_code": EXIT_SCHEMA,
            "details": {"fields": fields},
        }
    return {"error": "computation_error", "message": f"{type(exc).__name__}: {exc}", "exit_code": EXIT_COMPUTATION}


def handle_errors(command: Callable) -> Callable:
    """Run a command; on failure print the payload as JSON on stderr and exit with its code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except Exception as exc:
            payload = error_payload(exc)
            if payload["error"] == "computation_error" and not isinstance(exc, SubsidyError):
                logger.exception("unexpected failure")
            else:
                logger.error(payload["message"])
            click.echo(json.dumps(payload, sort_keys=True, default=str), err=True)
            sys.exit(payload["exit_code"])

    return wrapper
