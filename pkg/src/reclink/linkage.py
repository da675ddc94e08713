"""User-facing linkage operations: merge, dedup, aggregate, threshold tuning.

A merge treats one table as queries and the other as keys: key rows are
serialized, embedded and indexed, query rows retrieve their nearest keys by
cosine similarity, and an optional no-match threshold declares weak queries
unmatched. Cardinality (m:1, 1:m, m:m, 1:1) decides how retrieved
candidates become output rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterAssignment, ClusterParams, cluster
from .encoder import EmbeddingMatrix
from .errors import DataError
from .index import Neighbors, blocked_search, build_index, search
from .providers import ProviderSpec, embed_batch
from .results import (
    BELOW_THRESHOLD,
    CANDIDATES_EXHAUSTED,
    EMPTY_BLOCK,
    INVALID_EMBEDDING,
    LinkResult,
    Match,
    Unmatched,
)
from .tabular import ColumnSelector, Table
from .textprep import SeparatorSpec, serialize_table

MERGE_TYPES = ("1:1", "1:m", "m:1", "m:m")

# Joins blocking-column values into a block key; unlikely to occur in data.
BLOCK_KEY_SEP = "\x1f"

# 1:1 merges widen retrieval to this many candidates per query before the
# greedy assignment, so a query can fall back to its runner-up keys.
ONE_TO_ONE_CANDIDATES = 10

SCORE_COLUMN = "score"
RIGHT_PREFIX = "right_"


@dataclass
class MergeSpec:
    """Everything a merge needs besides the two tables."""

    provider: ProviderSpec
    merge_type: str = "m:1"
    on: ColumnSelector | None = None
    left_on: ColumnSelector | None = None
    right_on: ColumnSelector | None = None
    k: int = 1
    threshold: float | None = None
    blocking: ColumnSelector | None = None
    separator: SeparatorSpec = field(default_factory=SeparatorSpec)

    def __post_init__(self) -> None:
        if self.merge_type not in MERGE_TYPES:
            raise DataError(f"unknown merge_type {self.merge_type!r}; expected one of {MERGE_TYPES}")
        both_sided = self.left_on is not None and self.right_on is not None
        if (self.on is None) == (not both_sided):
            raise DataError("give exactly one of on= or left_on=/right_on=")
        if self.on is None and (self.left_on is None or self.right_on is None):
            raise DataError("left_on and right_on must be given together")
        if self.k < 1:
            raise DataError(f"k must be >= 1, got {self.k}")
        if self.merge_type == "1:1" and self.k != 1:
            raise DataError("merge_type 1:1 requires k=1")
        if self.threshold is not None and not (-1.0 <= self.threshold <= 1.0):
            raise DataError(f"threshold must lie in [-1, 1], got {self.threshold}")

    @property
    def left_selector(self) -> ColumnSelector:
        return self.on if self.on is not None else self.left_on  # type: ignore[return-value]

    @property
    def right_selector(self) -> ColumnSelector:
        return self.on if self.on is not None else self.right_on  # type: ignore[return-value]


def _block_keys(table: Table, blocking: ColumnSelector) -> list[str]:
    blocking.validate(table, "blocking side")
    return [BLOCK_KEY_SEP.join(row[c] for c in blocking.names) for _, row in table.iter_rows()]


def _collect_candidates(
    neighbors: Neighbors,
    embeddings: EmbeddingMatrix,
    threshold: float | None,
    missing_block: set[int],
) -> tuple[dict[int, list[Match]], list[Unmatched]]:
    """Threshold-filter retrieved hits into per-query candidate lists."""
    candidates: dict[int, list[Match]] = {}
    unmatched: list[Unmatched] = []
    for pos, query_id in enumerate(neighbors.query_ids):
        qid = int(query_id)
        if not embeddings.valid[pos]:
            unmatched.append(Unmatched(qid, INVALID_EMBEDDING))
            continue
        hits = neighbors.hits[pos]
        if not hits:
            reason = EMPTY_BLOCK if qid in missing_block else BELOW_THRESHOLD
            unmatched.append(Unmatched(qid, reason))
            continue
        kept = [h for h in hits if threshold is None or h.score >= threshold]
        if not kept:
            unmatched.append(Unmatched(qid, BELOW_THRESHOLD))
            continue
        candidates[qid] = [Match(qid, h.key_id, h.score, h.rank) for h in kept]
    return candidates, unmatched


def _greedy_one_to_one(candidates: dict[int, list[Match]]) -> tuple[dict[int, Match], list[Unmatched]]:
    """Accept candidate pairs best-score first while both sides are free."""
    pool = [m for matches in candidates.values() for m in matches]
    pool.sort(key=lambda m: (-m.score, m.query_id, m.key_id))
    used_queries: set[int] = set()
    used_keys: set[int] = set()
    accepted: dict[int, Match] = {}
    for m in pool:
        if m.query_id in used_queries or m.key_id in used_keys:
            continue
        accepted[m.query_id] = Match(m.query_id, m.key_id, m.score, 1)
        used_queries.add(m.query_id)
        used_keys.add(m.key_id)
    leftovers = [Unmatched(qid, CANDIDATES_EXHAUSTED) for qid in sorted(candidates) if qid not in accepted]
    return accepted, leftovers


def _output_columns(left: Table, right: Table) -> tuple[list[str], dict[str, str], str]:
    """Resolve output column names; colliding right columns get a fixed prefix."""
    out_cols = list(left.columns)
    taken = set(out_cols)
    right_names: dict[str, str] = {}
    for col in right.columns:
        name = col
        while name in taken:
            name = RIGHT_PREFIX + name
        right_names[col] = name
        taken.add(name)
        out_cols.append(name)
    score_name = SCORE_COLUMN
    while score_name in taken:
        score_name = RIGHT_PREFIX + score_name
    out_cols.append(score_name)
    return out_cols, right_names, score_name


def _merged_table(
    left: Table,
    right: Table,
    pairs_per_left: dict[int, list[tuple[int, float]]],
) -> Table:
    """One output row per (left, matched right) pair; unmatched left rows keep
    their cells with empty right columns and score."""
    out_cols, right_names, score_name = _output_columns(left, right)
    rows: list[dict[str, str]] = []
    for left_id, left_row in left.iter_rows():
        matched = pairs_per_left.get(left_id)
        if not matched:
            rows.append(dict(left_row))
            continue
        for right_id, score in matched:
            row = dict(left_row)
            right_row = right.rows[right_id]
            for col, name in right_names.items():
                row[name] = right_row[col]
            row[score_name] = f"{score:.6f}"
            rows.append(row)
    return Table(tuple(out_cols), tuple(rows))


def merge(left: Table, right: Table, spec: MergeSpec) -> tuple[Table, LinkResult]:
    """Link two tables by embedding retrieval.

    Returns the merged table (left columns, then right columns with
    collisions prefixed, then a score column) and the LinkResult audit.
    For 1:m merges the roles swap: right rows act as queries, so LinkResult
    query ids refer to the right table.
    """
    spec.left_selector.validate(left, "left")
    spec.right_selector.validate(right, "right")

    left_records = serialize_table(left, spec.left_selector, spec.separator)
    right_records = serialize_table(right, spec.right_selector, spec.separator)

    swap = spec.merge_type == "1:m"
    query_records = right_records if swap else left_records
    key_records = left_records if swap else right_records
    key_table = left if swap else right
    query_table = right if swap else left
    if len(key_records) == 0:
        raise DataError("merge key side is empty")

    query_emb = embed_batch(query_records, spec.provider)
    key_emb = embed_batch(key_records, spec.provider)

    key_blocks = _block_keys(key_table, spec.blocking) if spec.blocking else None
    index = build_index(key_emb, key_blocks)

    n_keys = len(index)
    k_retr = min(ONE_TO_ONE_CANDIDATES, n_keys) if spec.merge_type == "1:1" else spec.k

    missing_block: set[int] = set()
    if spec.blocking:
        query_blocks = _block_keys(query_table, spec.blocking)
        assert index.blocks is not None
        missing_block = {
            int(query_emb.row_ids[pos])
            for pos in range(len(query_emb))
            if query_blocks[pos] not in index.blocks
        }
        neighbors = blocked_search(index, query_emb, query_blocks, k_retr)
    else:
        neighbors = search(index, query_emb, k_retr)

    candidates, unmatched = _collect_candidates(neighbors, query_emb, spec.threshold, missing_block)

    result = LinkResult(unmatched=unmatched)
    pairs_per_left: dict[int, list[tuple[int, float]]] = {}

    if spec.merge_type == "1:1":
        accepted, leftovers = _greedy_one_to_one(candidates)
        result.matches = [accepted[qid] for qid in sorted(accepted)]
        result.unmatched.extend(leftovers)
        for m in result.matches:
            pairs_per_left[m.query_id] = [(m.key_id, m.score)]
    elif spec.merge_type == "m:1":
        for qid in sorted(candidates):
            result.matches.extend(candidates[qid])
            top = candidates[qid][0]
            pairs_per_left[qid] = [(top.key_id, top.score)]
    elif spec.merge_type == "m:m":
        for qid in sorted(candidates):
            result.matches.extend(candidates[qid][:spec.k])
            pairs_per_left[qid] = [(m.key_id, m.score) for m in candidates[qid][:spec.k]]
    else:  # 1:m — queries are right rows, keys are left rows
        for qid in sorted(candidates):
            result.matches.extend(candidates[qid])
            top = candidates[qid][0]
            pairs_per_left.setdefault(top.key_id, []).append((qid, top.score))
        for pairs in pairs_per_left.values():
            pairs.sort(key=lambda p: (-p[1], p[0]))

    result.unmatched.sort(key=lambda u: u.query_id)
    merged = _merged_table(left, right, pairs_per_left)
    return merged, result


def aggregate_rows(
    fine: Table,
    coarse: Table,
    provider: ProviderSpec,
    on: ColumnSelector | None = None,
    left_on: ColumnSelector | None = None,
    right_on: ColumnSelector | None = None,
    k: int = 1,
    threshold: float | None = None,
    separator: SeparatorSpec | None = None,
) -> tuple[Table, LinkResult]:
    """Map each fine row to its k nearest coarse rows (a thresholdless m:m merge)."""
    if len(fine) == 0 or len(coarse) == 0:
        raise DataError("aggregate_rows needs non-empty tables on both sides")
    spec = MergeSpec(
        provider=provider,
        merge_type="m:m",
        on=on,
        left_on=left_on,
        right_on=right_on,
        k=k,
        threshold=threshold,
        separator=separator or SeparatorSpec(),
    )
    return merge(fine, coarse, spec)


def dedup(
    table: Table,
    on: ColumnSelector,
    provider: ProviderSpec,
    params: ClusterParams | None = None,
    separator: SeparatorSpec | None = None,
) -> tuple[Table, ClusterAssignment]:
    """Semantic deduplication: embed, cluster, keep one row per cluster.

    The survivor is the cluster's lowest row_id; survivors keep their
    original relative order. The full assignment comes back for audit.
    """
    params = params or ClusterParams()
    records = serialize_table(table, on, separator or SeparatorSpec())
    embeddings = embed_batch(records, provider)
    assignment = cluster(embeddings, params)
    survivors = sorted(assignment.representatives.values())
    return table.subset(survivors), assignment


def tune_threshold(scores: list[float], labels: list[int]) -> tuple[float, float]:
    """Pick the score cutoff maximizing F1 for "match iff score >= threshold".

    Candidates are the midpoints between adjacent distinct scores plus
    sentinels below the min and above the max. Ties go to the lowest
    threshold. Returns (threshold, f1).
    """
    scores_arr = np.asarray(scores, dtype=np.float64)
    labels_arr = np.asarray(labels)
    if len(scores_arr) != len(labels_arr) or len(scores_arr) == 0:
        raise DataError("tune_threshold needs matching, non-empty scores and labels")
    if not set(np.unique(labels_arr)) <= {0, 1}:
        raise DataError("labels must be 0 (nonmatch) or 1 (match)")
    if not labels_arr.any():
        raise DataError("tune_threshold needs at least one positive label")

    eps = 1e-6
    distinct = np.unique(scores_arr)
    midpoints = (distinct[:-1] + distinct[1:]) / 2.0
    candidates = np.concatenate([[distinct[0] - eps], midpoints, [distinct[-1] + eps]])

    positives = labels_arr == 1
    best_t = float(candidates[0])
    best_f1 = -1.0
    for t in candidates:
        predicted = scores_arr >= t
        tp = int(np.sum(predicted & positives))
        fp = int(np.sum(predicted & ~positives))
        fn = int(np.sum(~predicted & positives))
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom else 0.0
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    return best_t, best_f1
