"""
Artifact writing utilities

CSV and JSON output for experiment runs. Floats are written with 17
significant digits so every value round-trips exactly.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Sequence, Union

import numpy as np

from jbdlab.config import settings
from jbdlab.errors import OutputError

logger = logging.getLogger(__name__)


def format_float(value: Any) -> str:
    """Render a number at 17 significant digits; other values via str()."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy values and containers to plain JSON types.

    Non-finite floats become the strings "inf", "-inf" and "nan" so the
    output stays strict JSON.
    """
    if isinstance(value, Mapping):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(item) for item in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


class ArtifactWriter:
    """
    Writes the files of one experiment run into a single directory.

    The directory is created on first use; every file written is tracked
    so the caller can report what was produced.
    """

    def __init__(self, out_dir: Union[str, Path, None] = None):
        """
        Initialize the writer.

        Args:
            out_dir: Output directory (default from settings)
        """
        self.out_dir = Path(out_dir or settings.out_dir)
        self.written: List[Path] = []
        logger.debug(f"ArtifactWriter initialized for {self.out_dir}")

    def _prepare(self, name: str) -> Path:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Cannot create output directory {self.out_dir}: {str(e)}")
            raise OutputError(f"cannot create output directory {self.out_dir}: {str(e)}") from e
        return self.out_dir / name

    def write_csv(
        self,
        name: str,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
    ) -> Path:
        """
        Write a CSV file with a header row.

        Raises:
            OutputError: If the file cannot be written
        """
        path = self._prepare(name)
        try:
            with path.open("w", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([format_float(value) for value in row])
        except OSError as e:
            logger.error(f"Failed to write {path}: {str(e)}")
            raise OutputError(f"cannot write {path}: {str(e)}") from e
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def write_records(self, name: str, records: Sequence[Mapping[str, Any]]) -> Path:
        """Write dictionaries sharing the keys of the first record as CSV."""
        if not records:
            raise ValueError(f"no records to write to {name}")
        header = list(records[0].keys())
        return self.write_csv(name, header, ([record[key] for key in header] for record in records))

    def write_json(self, name: str, payload: Any) -> Path:
        """
        Write a JSON document.

        Raises:
            OutputError: If the file cannot be written
        """
        path = self._prepare(name)
        try:
            path.write_text(json.dumps(to_jsonable(payload), indent=2) + "\n", encoding="utf-8")
        except OSError as e:
            logger.error(f"Failed to write {path}: {str(e)}")
            raise OutputError(f"cannot write {path}: {str(e)}") from e
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path
