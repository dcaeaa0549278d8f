"""
CSV ingestion and emission for the command line.

Input files have a header row and the columns x[,x2],y[,weight]; anything
else is ignored with a warning. Data rows start on line 2.
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from app.exceptions import DataError, InputFileError
from app.models import Dataset, RunReport

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("x", "y")
OPTIONAL_COLUMNS = ("x2", "weight")


def _numeric_column(raw: pd.Series, name: str) -> np.ndarray:
    values = pd.to_numeric(raw.str.strip(), errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        row = int(bad[0])
        raise InputFileError(f"column '{name}' has a non-numeric or non-finite value {raw.iloc[row]!r}", line=row + 2)
    return values


def read_dataset(path: str | Path) -> Dataset:
    """Parse a CSV into a checked Dataset; every parse failure names its line."""
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"input file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise InputFileError("file is empty", line=1) from e
    except pd.errors.ParserError as e:
        raise InputFileError(f"malformed CSV: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise InputFileError(f"header lacks required column(s) {', '.join(missing)}", line=1)
    extra = [c for c in frame.columns if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
    if extra:
        logger.warning(f"Ignoring columns: {', '.join(extra)}")

    columns = {c: _numeric_column(frame[c], c) for c in REQUIRED_COLUMNS + OPTIONAL_COLUMNS if c in frame.columns}
    if "weight" in columns:
        negative = np.flatnonzero(columns["weight"] < 0)
        if negative.size:
            raise InputFileError("weights must be non-negative", line=int(negative[0]) + 2)
    try:
        dataset = Dataset.build(columns["x"], columns["y"], x2=columns.get("x2"), weight=columns.get("weight"))
    except DataError as e:
        raise InputFileError(str(e)) from e
    logger.info(f"Read {dataset.n} rows from {path.name}")
    return dataset


def write_frame(frame: pd.DataFrame, path: str | Path, digits: int = 12) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format=f"%.{digits}g")
    return path


def write_report(report: RunReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(report.model_dump_json(indent=2))
    return path
