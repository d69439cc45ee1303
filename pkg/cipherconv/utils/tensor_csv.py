from __future__ import annotations

import csv as _csv
from pathlib import Path
from typing import List, Union

import numpy as np

from ..errors import WeightFormatError

PathLike = Union[str, Path]


def read_csv_rows(path: PathLike) -> List[List[float]]:
    """Read a header-less numeric CSV, one list per non-empty row.

    Raises:
        WeightFormatError: If the file is missing or a cell is not a number.
    """
    path = Path(path)
    if not path.exists():
        raise WeightFormatError(f"File not found: {path}")
    rows: List[List[float]] = []
    with path.open("r", newline="", encoding="utf-8") as fh:
        for row_no, row in enumerate(_csv.reader(fh), start=1):
            cells = [cell.strip() for cell in row]
            if not any(cells):
                continue
            values = []
            for col_no, cell in enumerate(cells, start=1):
                if cell == "":
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise WeightFormatError(
                        f"{path}: unparseable value {cell!r} at row {row_no}, column {col_no}"
                    ) from None
            rows.append(values)
    return rows


def read_csv_values(path: PathLike) -> np.ndarray:
    """All values of a CSV file flattened in row-major order."""
    rows = read_csv_rows(path)
    return np.array([v for row in rows for v in row], dtype=np.float64)


def read_csv_tensor(path: PathLike, shape) -> np.ndarray:
    values = read_csv_values(path)
    expected = int(np.prod(shape))
    if values.size != expected:
        raise WeightFormatError(
            f"{path}: expected {expected} values for shape {tuple(shape)}, found {values.size}"
        )
    return values.reshape(shape)


def write_csv_tensor(path: PathLike, array: np.ndarray) -> Path:
    """Write ``array`` row-major, one row per entry of its last axis."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.asarray(array, dtype=np.float64)
    rows = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(1, -1)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    return path
