"""Exact top-k inner-product retrieval over unit-norm embeddings.

This is the performance core: an exhaustive flat scan, chunked over keys,
keeping a bounded per-query candidate set. Scores are computed in 32-bit
with 64-bit accumulation and compared exactly; ties break toward the lower
key row_id, so results are independent of chunking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .encoder import EmbeddingMatrix
from .errors import DataError

QUERY_BLOCK = 256
KEY_CHUNK = 2048

# Sorts after every real key id when padding candidate buffers.
_PAD_ID = np.iinfo(np.int64).max


class Hit(NamedTuple):
    key_id: int
    score: float
    rank: int


@dataclass
class Neighbors:
    """Per-query ranked hits; scores non-increasing in rank."""

    query_ids: np.ndarray
    hits: list[list[Hit]]


@dataclass
class VectorIndex:
    keys: EmbeddingMatrix
    key_ids: np.ndarray       # row_ids of the valid key rows, in key order
    key_vectors: np.ndarray   # (n_valid, dim) float32
    blocks: dict[str, np.ndarray] | None  # block key -> positions into key_vectors

    @property
    def dim(self) -> int:
        return self.key_vectors.shape[1]

    def __len__(self) -> int:
        return len(self.key_ids)


def build_index(keys: EmbeddingMatrix, block_keys: Sequence[str] | None = None) -> VectorIndex:
    """Index all valid key rows; optionally partition them by block key."""
    if keys.dim < 2:
        raise DataError(f"index needs dim >= 2, got {keys.dim}")
    valid_pos = np.flatnonzero(keys.valid)
    if len(valid_pos) == 0:
        raise DataError("cannot build an index with zero valid key vectors")
    key_ids = keys.row_ids[valid_pos]
    key_vectors = keys.vectors[valid_pos].astype(np.float32)
    blocks = None
    if block_keys is not None:
        if len(block_keys) != len(keys):
            raise DataError("one block key per key row is required")
        blocks = {}
        for slot, pos in enumerate(valid_pos):
            blocks.setdefault(block_keys[pos], []).append(slot)
        blocks = {b: np.asarray(slots, dtype=np.int64) for b, slots in blocks.items()}
    return VectorIndex(keys=keys, key_ids=key_ids, key_vectors=key_vectors, blocks=blocks)


def _scores_f32(queries64: np.ndarray, key_chunk32: np.ndarray) -> np.ndarray:
    # 64-bit accumulation, 32-bit result.
    return (queries64 @ key_chunk32.astype(np.float64).T).astype(np.float32)


def _scan_block(
    q_vectors: np.ndarray,      # (b, dim) float32
    key_vectors: np.ndarray,    # (m, dim) float32
    key_ids: np.ndarray,        # (m,) int64
    k: int,
    chunk_size: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Exact top-k for one query block. Returns (scores, ids, n_filled)."""
    b = len(q_vectors)
    m = len(key_vectors)
    k_eff = min(k, m)
    best_scores = np.full((b, k_eff), -np.inf, dtype=np.float32)
    best_ids = np.full((b, k_eff), _PAD_ID, dtype=np.int64)
    q64 = q_vectors.astype(np.float64)
    for start in range(0, m, chunk_size):
        stop = min(start + chunk_size, m)
        scores = _scores_f32(q64, key_vectors[start:stop])
        cat_scores = np.hstack([best_scores, scores])
        cat_ids = np.hstack([best_ids, np.broadcast_to(key_ids[start:stop], (b, stop - start))])
        for r in range(b):
            order = np.lexsort((cat_ids[r], -cat_scores[r]))[:k_eff]
            best_scores[r] = cat_scores[r, order]
            best_ids[r] = cat_ids[r, order]
    return best_scores, best_ids, k_eff


def search(
    index: VectorIndex,
    queries: EmbeddingMatrix,
    k: int,
    chunk_size: int = KEY_CHUNK,
) -> Neighbors:
    """Exact top-k by inner product (= cosine for unit-norm vectors).

    Invalid queries get empty hit lists; if k exceeds the key count, all
    keys are returned ranked.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if queries.dim != index.dim:
        raise DataError(f"query dim {queries.dim} != index dim {index.dim}")
    hits: list[list[Hit]] = [[] for _ in range(len(queries))]
    valid_pos = np.flatnonzero(queries.valid)
    q32 = queries.vectors.astype(np.float32)
    for start in range(0, len(valid_pos), QUERY_BLOCK):
        block = valid_pos[start:start + QUERY_BLOCK]
        scores, ids, k_eff = _scan_block(q32[block], index.key_vectors, index.key_ids, k, chunk_size)
        for r, pos in enumerate(block):
            hits[pos] = [
                Hit(int(ids[r, j]), float(scores[r, j]), j + 1) for j in range(k_eff)
            ]
    return Neighbors(query_ids=queries.row_ids.copy(), hits=hits)


def blocked_search(
    index: VectorIndex,
    queries: EmbeddingMatrix,
    query_block_keys: Sequence[str],
    k: int,
    chunk_size: int = KEY_CHUNK,
) -> Neighbors:
    """Top-k restricted to keys sharing the query's block key.

    Queries whose block has no keys come back with empty hit lists.
    """
    if index.blocks is None:
        raise DataError("index was built without blocks")
    if len(query_block_keys) != len(queries):
        raise DataError("one block key per query row is required")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if queries.dim != index.dim:
        raise DataError(f"query dim {queries.dim} != index dim {index.dim}")
    hits: list[list[Hit]] = [[] for _ in range(len(queries))]
    by_block: dict[str, list[int]] = {}
    for pos in np.flatnonzero(queries.valid):
        by_block.setdefault(query_block_keys[pos], []).append(pos)
    q32 = queries.vectors.astype(np.float32)
    for block_key, positions in by_block.items():
        slots = index.blocks.get(block_key)
        if slots is None:
            continue
        scores, ids, k_eff = _scan_block(
            q32[positions], index.key_vectors[slots], index.key_ids[slots], k, chunk_size)
        for r, pos in enumerate(positions):
            hits[pos] = [Hit(int(ids[r, j]), float(scores[r, j]), j + 1) for j in range(k_eff)]
    return Neighbors(query_ids=queries.row_ids.copy(), hits=hits)
