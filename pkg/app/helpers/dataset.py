import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.exceptions import ConfigError
from app.utils.log_utils import get_logger

logger = get_logger("IO")

_X_COLUMN = re.compile(r"^x(\d+)$")
_W_COLUMN = re.compile(r"^w(\d+)$")


@dataclass
class Dataset:
    """Observed records (y, d, x, w, z); x and w are 2-d with one row per record."""

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    w: np.ndarray
    z: np.ndarray
    x_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        n = self.y.size
        self.x = np.asarray(self.x, dtype=float).reshape(n, -1)
        self.w = np.asarray(self.w, dtype=float).reshape(n, -1)
        if not (self.d.size == self.z.size == n):
            raise ConfigError("y, d and z must have the same number of records")
        if not np.all((self.d == 0) | (self.d == 1)):
            raise ConfigError("treatment column d must be 0/1")
        for name, arr in (("y", self.y), ("z", self.z), ("x", self.x), ("w", self.w)):
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"column {name} has missing or non-finite values")
        if not self.x_names:
            self.x_names = [f"x{j + 1}" for j in range(self.k)]

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def k(self) -> int:
        return int(self.x.shape[1])

    @property
    def m(self) -> int:
        return int(self.w.shape[1])

    def x_cells(self) -> List[Tuple[float, ...]]:
        if self.k == 0:
            return [()]
        return [tuple(float(v) for v in row) for row in np.unique(self.x, axis=0)]

    def cell_mask(self, x: Sequence[float], w: Optional[Sequence[float]] = None) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        if self.k:
            mask &= np.all(np.isclose(self.x, np.asarray(x, dtype=float)[None, :]), axis=1)
        if w is not None and self.m:
            mask &= np.all(np.isclose(self.w, np.asarray(w, dtype=float)[None, :]), axis=1)
        return mask

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.y[mask], self.d[mask], self.x[mask], self.w[mask], self.z[mask], list(self.x_names))

    def to_frame(self) -> pd.DataFrame:
        columns = {"y": self.y, "d": self.d.astype(int)}
        for j in range(self.k):
            columns[f"x{j + 1}"] = self.x[:, j]
        for j in range(self.m):
            columns[f"w{j + 1}"] = self.w[:, j]
        columns["z"] = self.z
        return pd.DataFrame(columns)

    def to_csv(self, path: Path, digits: int = 17) -> None:
        self.to_frame().to_csv(path, index=False, float_format=f"%.{digits}g", lineterminator="\n")
        logger.info("wrote %d records to %s", self.n, path)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, x_names: Optional[List[str]] = None) -> "Dataset":
        missing = [c for c in ("y", "d", "z") if c not in frame.columns]
        if missing:
            raise ConfigError(f"dataset is missing required columns: {', '.join(missing)}")
        x_cols = sorted((c for c in frame.columns if _X_COLUMN.match(c)), key=lambda c: int(c[1:]))
        w_cols = sorted((c for c in frame.columns if _W_COLUMN.match(c)), key=lambda c: int(c[1:]))
        unknown = set(frame.columns) - {"y", "d", "z", *x_cols, *w_cols}
        if unknown:
            raise ConfigError(f"unexpected dataset columns: {', '.join(sorted(unknown))}")
        if frame.isna().any().any():
            raise ConfigError("dataset has missing fields")
        return cls(
            y=frame["y"].to_numpy(float),
            d=frame["d"].to_numpy(float),
            x=frame[x_cols].to_numpy(float),
            w=frame[w_cols].to_numpy(float),
            z=frame["z"].to_numpy(float),
            x_names=x_names or [],
        )

    @classmethod
    def from_csv(cls, path: Path, x_names: Optional[List[str]] = None) -> "Dataset":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"dataset not found: {path}")
        try:
            frame = pd.read_csv(path, encoding="utf-8")
        except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as exc:
            raise ConfigError(f"could not parse dataset {path}: {exc}")
        logger.info("read %d records from %s", len(frame), path)
        return cls.from_frame(frame, x_names)
