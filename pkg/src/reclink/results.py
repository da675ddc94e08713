"""Link results: ranked candidate lists per query plus unmatched queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import DataError

# Reasons a query ends up without a match.
BELOW_THRESHOLD = "below_threshold"
EMPTY_BLOCK = "empty_block"
INVALID_EMBEDDING = "invalid_embedding"
# 1:1 merges only: the query had candidates but every key was claimed first.
CANDIDATES_EXHAUSTED = "candidates_exhausted"

UNMATCHED_REASONS = (BELOW_THRESHOLD, EMPTY_BLOCK, INVALID_EMBEDDING, CANDIDATES_EXHAUSTED)


class Match(NamedTuple):
    query_id: int
    key_id: int
    score: float
    rank: int


class Unmatched(NamedTuple):
    query_id: int
    reason: str


@dataclass
class LinkResult:
    """Per-query ranked candidates (rank 1 = best) and unmatched queries."""

    matches: list[Match] = field(default_factory=list)
    unmatched: list[Unmatched] = field(default_factory=list)

    def rank1(self) -> dict[int, Match]:
        """Map query_id -> its rank-1 match."""
        return {m.query_id: m for m in self.matches if m.rank == 1}

    def by_query(self) -> dict[int, list[Match]]:
        out: dict[int, list[Match]] = {}
        for m in self.matches:
            out.setdefault(m.query_id, []).append(m)
        for hits in out.values():
            hits.sort(key=lambda m: m.rank)
        return out

    def query_ids(self) -> set[int]:
        """Every query id the result accounts for (matched at any rank or unmatched)."""
        return {m.query_id for m in self.matches} | {u.query_id for u in self.unmatched}

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for m in self.matches:
                fh.write(json.dumps(
                    {"query": m.query_id, "key": m.key_id, "score": m.score, "rank": m.rank},
                    sort_keys=True))
                fh.write("\n")
            for u in self.unmatched:
                fh.write(json.dumps({"query": u.query_id, "unmatched": u.reason}, sort_keys=True))
                fh.write("\n")


def read_link_result(path: str | Path) -> LinkResult:
    """Read a LinkResult audit file written by write_jsonl."""
    result = LinkResult()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "unmatched" in obj:
                reason = obj["unmatched"]
                if reason not in UNMATCHED_REASONS:
                    raise DataError(f"{path} line {lineno}: unknown unmatched reason {reason!r}")
                result.unmatched.append(Unmatched(int(obj["query"]), reason))
            else:
                result.matches.append(
                    Match(int(obj["query"]), int(obj["key"]), float(obj["score"]), int(obj["rank"])))
    return result
