"""Tabular data model: immutable string-valued tables with stable row ids.

Tables are the universal input/output of the package. All cell values are
strings; a row's id is its 0-based position in load order and is preserved
by every read/write.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

FORMATS = ("csv", "jsonl")


@dataclass(frozen=True)
class Table:
    """Ordered rows of string-valued records with named columns.

    Row ids are implicit: row i has row_id i. Rows are normalized at
    construction so every row carries every column (missing cells become
    empty strings), which makes csv and jsonl sources interchangeable.
    """

    columns: tuple[str, ...]
    rows: tuple[dict[str, str], ...]

    def __post_init__(self) -> None:
        if len(set(self.columns)) != len(self.columns):
            raise DataError(f"duplicate column names: {list(self.columns)}")
        if any(not c for c in self.columns):
            raise DataError("column names must be non-empty")
        colset = set(self.columns)
        normalized = []
        for i, row in enumerate(self.rows):
            extra = set(row) - colset
            if extra:
                raise DataError(f"row {i} has unknown columns: {sorted(extra)}")
            normalized.append({c: row.get(c, "") for c in self.columns})
        object.__setattr__(self, "rows", tuple(normalized))

    def __len__(self) -> int:
        return len(self.rows)

    def iter_rows(self) -> Iterator[tuple[int, dict[str, str]]]:
        """Yield (row_id, record) pairs in order."""
        return iter(enumerate(self.rows))

    def cell(self, row_id: int, column: str) -> str:
        return self.rows[row_id][column]

    def subset(self, row_ids: Iterable[int]) -> "Table":
        """New table keeping the given rows, in the given order (ids reset)."""
        return Table(self.columns, tuple(self.rows[i] for i in row_ids))


@dataclass(frozen=True)
class ColumnSelector:
    """A non-empty list of column names (the `on` argument of a merge)."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.names:
            raise DataError("column selector must name at least one column")
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def parse(cls, spec: str) -> "ColumnSelector":
        """Parse a comma-separated column list, e.g. "name,city"."""
        names = tuple(s.strip() for s in spec.split(",") if s.strip())
        return cls(names)

    def validate(self, table: Table, side: str = "table") -> None:
        for name in self.names:
            if name not in table.columns:
                raise DataError(f"unknown column {name!r} on {side} (have {list(table.columns)})")


def _infer_format(path: str | Path, format: str | None) -> str:
    if format is not None:
        if format not in FORMATS:
            raise DataError(f"unsupported table format {format!r}; expected one of {FORMATS}")
        return format
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise DataError(f"cannot infer format of {path}: pass format='csv' or 'jsonl'")


def _coerce_cell(value: object, path: str | Path, line: int, key: str) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    raise DataError(f"{path} line {line}: column {key!r} holds a nested value; cells must be scalars")


def load_table(path: str | Path, format: str | None = None) -> Table:
    """Load a csv (RFC 4180, mandatory header) or jsonl file into a Table.

    Row ids follow file order. Empty cells load as empty strings. jsonl
    columns are the union of keys in first-seen order.
    """
    fmt = _infer_format(path, format)
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty csv (a header row is required)") from None
            rows = []
            for record in reader:
                if len(record) != len(header):
                    raise DataError(
                        f"{path} line {reader.line_num}: expected {len(header)} fields, got {len(record)}"
                    )
                rows.append(dict(zip(header, record)))
        return Table(tuple(header), tuple(rows))

    columns: list[str] = []
    seen: set[str] = set()
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {lineno}: invalid json: {exc}") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path} line {lineno}: expected one object per line")
            record = {}
            for key, value in obj.items():
                if not key:
                    raise DataError(f"{path} line {lineno}: empty column name")
                if key not in seen:
                    seen.add(key)
                    columns.append(key)
                record[key] = _coerce_cell(value, path, lineno, key)
            rows.append(record)
    return Table(tuple(columns), tuple(rows))


def write_table(table: Table, path: str | Path, format: str | None = None) -> None:
    """Write a Table; load_table(write_table(t)) == t."""
    fmt = _infer_format(path, format)
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(table.columns)
            for _, row in table.iter_rows():
                writer.writerow([row[c] for c in table.columns])
    else:
        with open(path, "w", encoding="utf-8") as fh:
            for _, row in table.iter_rows():
                fh.write(json.dumps({c: row[c] for c in table.columns}, ensure_ascii=False))
                fh.write("\n")
