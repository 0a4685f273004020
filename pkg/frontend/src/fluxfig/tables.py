"""Readers for the fluxlab CLI's published CSV/JSON schemas.

CSV files start with ``#`` comment lines (command, config hash, seed)
followed by a mandatory column-header row and comma/period-formatted
data.  Schema violations raise :class:`SchemaError` whose message lists
the column diff, which the CLI forwards verbatim.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

__all__ = ["SchemaError", "Table", "read_table", "read_json_result"]


class SchemaError(Exception):
    """An input file does not match the expected fluxlab schema."""


def _column_diff(expected: list[str], found: list[str]) -> str:
    missing = [c for c in expected if c not in found]
    unexpected = [c for c in found if c not in expected]
    parts = []
    if missing:
        parts.append("missing columns: " + ", ".join(missing))
    if unexpected:
        parts.append("unexpected columns: " + ", ".join(unexpected))
    parts.append("expected: " + ", ".join(expected))
    parts.append("found: " + (", ".join(found) if found else "(none)"))
    return "; ".join(parts)


class Table:
    """Column-oriented view of one result CSV."""

    def __init__(self, columns: list[str], rows: list[list[str]]):
        self.columns = columns
        self.rows = rows

    def __len__(self) -> int:
        return len(self.rows)

    def numeric(self, name: str) -> np.ndarray:
        """One column as floats; blank cells become NaN."""
        k = self.columns.index(name)
        out = np.empty(len(self.rows))
        for i, row in enumerate(self.rows):
            cell = row[k].strip() if k < len(row) else ""
            out[i] = float(cell) if cell else math.nan
        return out

    def strings(self, name: str) -> list[str]:
        k = self.columns.index(name)
        return [row[k] if k < len(row) else "" for row in self.rows]


def read_table(
    path: str | Path,
    expected: list[str],
    free_first_column: bool = False,
) -> Table:
    """Read one fluxlab CSV and check its header against ``expected``.

    free_first_column accepts any name for the leading column (the
    coherence sweep labels it with the swept variable).
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: input file does not exist")
    body = [
        ln for ln in path.read_text().splitlines()
        if ln.strip() and not ln.startswith("#")
    ]
    if not body:
        raise SchemaError(
            f"{path}: no header row; " + _column_diff(expected, [])
        )
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    found = [c.strip() for c in rows[0]]
    check_expected, check_found = expected, found
    if free_first_column and found:
        check_expected, check_found = expected[1:], found[1:]
    if check_found != check_expected:
        raise SchemaError(f"{path}: " + _column_diff(expected, found))
    return Table(found, rows[1:])


def read_json_result(path: str | Path, required: tuple[str, ...]) -> dict:
    """Read one fluxlab JSON result and check its top-level keys."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: input file does not exist")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise SchemaError(f"{path}: top level must be an object")
    missing = [k for k in required if k not in payload]
    if missing:
        raise SchemaError(
            f"{path}: missing keys: " + ", ".join(missing)
            + "; found: " + ", ".join(sorted(payload))
        )
    return payload
