"""Record serialization and the edit-distance baseline matcher.

Multi-field records are flattened to a single text by joining the selected
column values with a separator token; the same text is fed to every
embedding provider. Levenshtein matching over the same serialized texts is
the classical baseline the embedding route is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .results import BELOW_THRESHOLD, LinkResult, Match, Unmatched
from .tabular import ColumnSelector, Table

DEFAULT_SEPARATOR = " [SEP] "


@dataclass(frozen=True)
class SeparatorSpec:
    token: str = DEFAULT_SEPARATOR

    def __post_init__(self) -> None:
        if not self.token:
            raise DataError("separator token must be non-empty")


@dataclass(frozen=True)
class SerializedRecord:
    row_id: int
    text: str


def serialize_record(
    row_id: int,
    record: dict[str, str],
    selector: ColumnSelector,
    sep: SeparatorSpec = SeparatorSpec(),
) -> SerializedRecord:
    """Join the selected column values, in selector order, with the separator.

    Missing/empty values contribute empty strings; separators are retained,
    so the text is injective on the selected values as long as no value
    contains the separator token itself.
    """
    try:
        parts = [record[name] for name in selector.names]
    except KeyError as exc:
        raise DataError(f"unknown column {exc.args[0]!r} while serializing record {row_id}") from None
    return SerializedRecord(row_id, sep.token.join(parts))


def serialize_table(
    table: Table, selector: ColumnSelector, sep: SeparatorSpec = SeparatorSpec()
) -> list[SerializedRecord]:
    selector.validate(table)
    return [serialize_record(i, row, selector, sep) for i, row in table.iter_rows()]


def levenshtein(a: str, b: str) -> int:
    """Minimal number of single-character insert/delete/substitute edits.

    Operates on Unicode code points. Two-row dynamic program, O(len(a)*len(b)).
    """
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    current = [0] * (len(b) + 1)
    for i, ca in enumerate(a, start=1):
        current[0] = i
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous, current = current, previous
    return previous[len(b)]


def edit_similarity(a: str, b: str) -> float:
    """1 - d/max(|a|,|b|), a length-normalized similarity in [0, 1]."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def edit_distance_link(
    queries: list[SerializedRecord],
    keys: list[SerializedRecord],
    k: int = 1,
    threshold: float | None = None,
) -> LinkResult:
    """Top-k keys per query by normalized edit similarity.

    Ties break toward the lower key row_id. With a threshold, queries whose
    best candidate falls below it are reported unmatched.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if not keys:
        raise DataError("edit_distance_link requires a non-empty key side")
    result = LinkResult()
    for query in queries:
        scored = [(edit_similarity(query.text, key.text), key.row_id) for key in keys]
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        kept = [(s, kid) for s, kid in scored[:k] if threshold is None or s >= threshold]
        if not kept:
            result.unmatched.append(Unmatched(query.row_id, BELOW_THRESHOLD))
            continue
        for rank, (score, key_id) in enumerate(kept, start=1):
            result.matches.append(Match(query.row_id, key_id, score, rank))
    return result
