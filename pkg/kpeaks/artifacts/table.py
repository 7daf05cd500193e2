"""A module for the CsvTable class."""
import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from werkzeug.utils import secure_filename


def format_number(value) -> str:
    """Format floats with 17 significant digits; pass everything else through str."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


class CsvTable:
    """Rows with a fixed header, written comma-separated with LF endings."""

    def __init__(self, columns: Sequence[str], rows: Optional[List[Dict]] = None):
        self.columns = list(columns)
        self.rows: List[Dict] = []
        for row in rows or []:
            self.append(row)

    @classmethod
    def from_rows(cls, rows: List[Dict]) -> "CsvTable":
        """Take the header from the keys of the first row."""
        if not rows:
            raise ValueError("Cannot infer columns of an empty table")
        return cls(list(rows[0]), rows)

    def append(self, row: Dict) -> None:
        """Add a row; missing columns stay empty."""
        unknown = set(row) - set(self.columns)
        if unknown:
            raise ValueError(f"Row has columns not in the header: {sorted(unknown)}")
        self.rows.append(dict(row))

    def save(self, out_dir: Path, name: str) -> Path:
        """Write the table to out_dir under a sanitized file name."""
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / secure_filename(name)
        with open(path, mode="w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow(
                    [format_number(row[c]) if c in row else "" for c in self.columns]
                )
        return path

    def __len__(self):
        return len(self.rows)

    def __repr__(self):
        return f"CsvTable(columns={self.columns!r}, rows={len(self.rows)})"
