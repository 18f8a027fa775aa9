import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.config import settings
from app.exceptions import ConfigError
from app.utils.log_utils import get_logger

logger = get_logger("IO")

ConfigModel = TypeVar("ConfigModel", bound=BaseModel)


def ensure_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def to_plain(obj: Any) -> Any:
    """Reduce models, arrays and tuples to JSON-compatible builtins."""
    if isinstance(obj, BaseModel):
        return to_plain(obj.model_dump())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return to_plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _encode(obj: Any, digits: int, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        text = f"{obj:.{digits}g}"
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, digits, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, digits, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, digits, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj: Any, digits: Optional[int] = None) -> str:
    """Deterministic JSON: floats at a fixed number of significant digits, NaN/inf as null."""
    return _encode(to_plain(obj), digits or settings.FLOAT_DIGITS, 2, 0) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj), encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def read_json(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})")


def write_table(path: Path, rows: List[Dict[str, Any]], columns: Sequence[str]) -> Path:
    path = Path(path)
    frame = pd.DataFrame([to_plain(row) for row in rows], columns=list(columns))
    frame.to_csv(path, index=False, float_format=f"%.{settings.FLOAT_DIGITS}g", lineterminator="\n")
    logger.info("wrote %d rows to %s", len(frame), path)
    return path


def read_table(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    return pd.read_csv(path, encoding="utf-8")


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def load_config(path: Path, model: Type[ConfigModel]) -> ConfigModel:
    """Read a run-config JSON file and validate it against `model`."""
    payload = read_json(path)
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return model.model_validate(payload)
