"""
Case-count CSV ingestion, output writing and the run manifest.
"""
import json
import logging
import os
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from inference.core import DataError, TimeSeriesData

logger = logging.getLogger(__name__)

DATE_COLUMN = "date"
LOCAL_COLUMN = "local_cases"
IMPORTED_COLUMN = "imported_cases"
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "plotly")


def _counts(frame: pd.DataFrame, column: str, allow_missing: bool) -> np.ndarray:
    raw = frame[column].str.strip()
    blank = raw.isna() | (raw == "")
    if blank.any() and not allow_missing:
        line = int(np.flatnonzero(blank.to_numpy())[0]) + 2
        raise DataError(f"line {line}: {column} cannot be blank")
    values = pd.to_numeric(raw.where(~blank), errors="coerce")
    bad = values.isna() & ~blank
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise DataError(f"line {line}: {column} value '{raw.iloc[line - 2]}' is not a count")
    values = values.to_numpy(dtype=float)
    present = ~np.isnan(values)
    negative = np.flatnonzero(present & (values < 0))
    if negative.size:
        raise DataError(f"line {negative[0] + 2}: {column} cannot be negative ({values[negative[0]]:g})")
    fractional = np.flatnonzero(present & (values != np.round(values)))
    if fractional.size:
        raise DataError(f"line {fractional[0] + 2}: {column} must be a whole number ({values[fractional[0]]:g})")
    return values


def ingest(path: str) -> TimeSeriesData:
    """
    Read a case-count CSV with header ``date,local_cases[,imported_cases]``.

    Dates are ISO-8601 and must be consecutive calendar days. Blank local cases
    are missing days; an absent imported column means no imports.

    Raises:
        DataError: missing file or column, a gap in the dates, or a bad count (with its line number)
    """
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"could not parse {path}: {e}") from e
    frame.columns = [c.strip() for c in frame.columns]
    for column in (DATE_COLUMN, LOCAL_COLUMN):
        if column not in frame.columns:
            raise DataError(f"{path} has no '{column}' column")
    if frame.empty:
        raise DataError(f"{path} has no rows")

    dates = pd.to_datetime(frame[DATE_COLUMN].str.strip(), format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        line = int(np.flatnonzero(dates.isna().to_numpy())[0]) + 2
        raise DataError(f"line {line}: '{frame[DATE_COLUMN].iloc[line - 2]}' is not an ISO-8601 date")
    if not dates.is_monotonic_increasing or dates.duplicated().any():
        raise DataError(f"{path}: dates must be strictly increasing")
    expected = pd.date_range(dates.iloc[0], dates.iloc[-1], freq="D")
    gaps = expected.difference(pd.DatetimeIndex(dates))
    if len(gaps):
        listed = ", ".join(str(d.date()) for d in gaps)
        raise DataError(f"{path}: dates are not consecutive; missing {listed}")

    local = _counts(frame, LOCAL_COLUMN, allow_missing=True)
    imports = _counts(frame, IMPORTED_COLUMN, allow_missing=False) if IMPORTED_COLUMN in frame.columns else None
    data = TimeSeriesData(dates.iloc[0].date(), local, imports)
    logger.info(f"Ingested {data.T} days from {path} ({int(data.missing.sum())} missing)")
    return data


def write_series(data: TimeSeriesData, path: str):
    """Write a series in the schema ``ingest`` reads."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    data.to_frame().to_csv(path, index=False)


def library_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for package in TRACKED_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "not installed"
    return versions


class OutputWriter:
    """
    Writes a run's CSV outputs into one directory and records them for the manifest.
    """

    def __init__(self, directory: str):
        """
        Initialize the writer.

        Args:
            directory: Output directory, created if needed
        """
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.files: List[str] = []

    def path(self, name: str) -> Path:
        return self.directory / name

    def write_csv(self, name: str, frame: pd.DataFrame, float_format: str = "%.6g") -> Dict:
        """
        Write one table with a header row.

        Returns:
            Dictionary with success status and the written path
        """
        path = self.path(name)
        try:
            frame.to_csv(path, index=False, float_format=float_format)
        except OSError as e:
            logger.error(f"Error writing {path}: {e}")
            return {"success": False, "message": f"could not write {name}: {e}", "path": str(path)}
        self.files.append(name)
        logger.info(f"Wrote {path}")
        return {"success": True, "message": f"wrote {name}", "path": str(path)}

    def write_manifest(self, config: Dict, seed: int, command: str, stats: Optional[Dict] = None,
                       extra: Optional[Dict] = None) -> Dict:
        """
        Write manifest.json: config echo, seed, library versions, wall-clock and run statistics.
        """
        manifest = {
            "command": command,
            "seed": seed,
            "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "versions": library_versions(),
            "config": config,
            "files": sorted(self.files),
            "run_stats": stats or {},
            **(extra or {}),
        }
        path = self.path("manifest.json")
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(manifest, f, indent=2, ensure_ascii=False, default=str)
        except OSError as e:
            logger.error(f"Error writing manifest: {e}")
            return {"success": False, "message": f"could not write manifest: {e}"}
        return {"success": True, "message": "manifest written", "path": str(path)}
