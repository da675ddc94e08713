"""Clustering over embeddings for noisy deduplication.

All algorithms work on cosine distance (1 - cosine similarity, in [0, 2]).
Cuts are inclusive: points merge when their linkage distance is <= the
threshold. Rows with invalid embeddings are never merged; each becomes its
own singleton cluster.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import json

import numpy as np

from .encoder import EmbeddingMatrix
from .errors import DataError

ALGORITHMS = ("slink", "dbscan", "agglomerative")
LINKAGE_MODES = ("single", "complete", "average")


@dataclass(frozen=True)
class ClusterParams:
    algorithm: str = "slink"
    threshold: float = 0.3     # cosine-distance cut (slink / agglomerative); 0.3 = similarity 0.7
    linkage_mode: str = "average"
    eps: float = 0.3           # dbscan neighborhood radius, cosine distance
    min_samples: int = 2       # dbscan core point threshold; the neighborhood includes the point

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise DataError(f"unknown clustering algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.linkage_mode not in LINKAGE_MODES:
            raise DataError(f"unknown linkage mode {self.linkage_mode!r}; expected one of {LINKAGE_MODES}")
        if not (0.0 <= self.threshold <= 2.0):
            raise DataError(f"cluster threshold must lie in [0, 2], got {self.threshold}")
        if not (0.0 <= self.eps <= 2.0):
            raise DataError(f"dbscan eps must lie in [0, 2], got {self.eps}")
        if self.min_samples < 1:
            raise DataError(f"min_samples must be >= 1, got {self.min_samples}")

    @classmethod
    def from_similarity(cls, similarity: float, **kwargs) -> "ClusterParams":
        """Build params from a user-facing cosine-similarity cut (e.g. 0.7)."""
        return cls(threshold=1.0 - similarity, **kwargs)


@dataclass
class ClusterAssignment:
    """row_id -> cluster id; cluster ids are dense, ordered by representative."""

    labels: dict[int, int]
    representatives: dict[int, int]  # cluster id -> lowest row_id in the cluster

    def clusters(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for row_id, cid in sorted(self.labels.items()):
            out.setdefault(cid, []).append(row_id)
        return out

    def as_sets(self) -> set[frozenset]:
        return {frozenset(members) for members in self.clusters().values()}

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row_id, cid in sorted(self.labels.items()):
                fh.write(json.dumps(
                    {"row": row_id, "cluster": cid, "representative": self.representatives[cid]},
                    sort_keys=True))
                fh.write("\n")


def cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise 1 - v_i . v_j, symmetrized, zero diagonal, floored at 0."""
    sims = vectors @ vectors.T
    sims = (sims + sims.T) / 2.0
    dist = 1.0 - sims
    np.fill_diagonal(dist, 0.0)
    return np.maximum(dist, 0.0)


def slink_pointers(dist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """SLINK pointer representation of the single-linkage dendrogram.

    Returns (pi, lam): point j first joins the cluster of pi[j] at merge
    height lam[j]. O(n^2) time, O(n) working memory beyond the input.
    """
    n = len(dist)
    pi = np.zeros(n, dtype=np.int64)
    lam = np.full(n, np.inf)
    M = np.empty(n, dtype=np.float64)
    for i in range(1, n):
        pi[i] = i
        lam[i] = np.inf
        M[:i] = dist[i, :i]
        for j in range(i):
            if lam[j] >= M[j]:
                if lam[j] < M[pi[j]]:
                    M[pi[j]] = lam[j]
                lam[j] = M[j]
                pi[j] = i
            else:
                if M[j] < M[pi[j]]:
                    M[pi[j]] = M[j]
        for j in range(i):
            if lam[j] >= lam[pi[j]]:
                pi[j] = i
    return pi, lam


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def slink_partition(dist: np.ndarray, threshold: float) -> list[int]:
    """Cut the SLINK dendrogram at an (inclusive) distance threshold."""
    pi, lam = slink_pointers(dist)
    uf = _UnionFind(len(dist))
    for j in range(len(dist)):
        if lam[j] <= threshold:
            uf.union(j, int(pi[j]))
    return [uf.find(i) for i in range(len(dist))]


def agglomerative_partition(
    dist: np.ndarray, threshold: float, mode: str = "average"
) -> list[int]:
    """Naive hierarchical clustering with Lance-Williams distance updates.

    Merges the globally closest active pair while its linkage distance is
    <= threshold; ties resolve to the lowest (row, col) pair. O(n^3).
    """
    n = len(dist)
    work = dist.astype(np.float64).copy()
    np.fill_diagonal(work, np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    uf = _UnionFind(n)
    for _ in range(n - 1):
        flat = np.argmin(work)
        i, j = divmod(int(flat), n)
        if not np.isfinite(work[i, j]) or work[i, j] > threshold:
            break
        if j < i:
            i, j = j, i
        others = active.copy()
        others[i] = others[j] = False
        if mode == "single":
            merged = np.minimum(work[i, others], work[j, others])
        elif mode == "complete":
            merged = np.maximum(work[i, others], work[j, others])
        else:
            merged = (sizes[i] * work[i, others] + sizes[j] * work[j, others]) / (sizes[i] + sizes[j])
        work[i, others] = merged
        work[others, i] = merged
        sizes[i] += sizes[j]
        active[j] = False
        work[j, :] = np.inf
        work[:, j] = np.inf
        uf.union(i, j)
    return [uf.find(i) for i in range(n)]


def dbscan_partition(dist: np.ndarray, eps: float, min_samples: int) -> list[int]:
    """Density clustering on a distance matrix; noise points stay singletons.

    Clusters are the connected components of the core-point graph; border
    points attach to the cluster of their nearest core point (ties to the
    lower index), which makes the partition independent of row order.
    """
    n = len(dist)
    within = dist <= eps
    core = within.sum(axis=1) >= min_samples
    labels = [-1] * n
    cid = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        queue = [seed]
        labels[seed] = cid
        while queue:
            p = queue.pop()
            for q in np.flatnonzero(within[p] & core):
                if labels[q] == -1:
                    labels[q] = cid
                    queue.append(int(q))
        cid += 1
    for p in range(n):
        if core[p] or labels[p] != -1:
            continue
        core_near = np.flatnonzero(within[p] & core)
        if len(core_near):
            nearest = core_near[int(np.argmin(dist[p, core_near]))]
            labels[p] = labels[nearest]
    # remaining -1 labels are noise; leave them as unique singleton groups
    next_id = cid
    for p in range(n):
        if labels[p] == -1:
            labels[p] = next_id
            next_id += 1
    return labels


def _canonical_assignment(row_ids: list[int], groups: list[int]) -> ClusterAssignment:
    by_group: dict[int, list[int]] = {}
    for row_id, g in zip(row_ids, groups):
        by_group.setdefault(g, []).append(row_id)
    ordered = sorted(by_group.values(), key=min)
    labels: dict[int, int] = {}
    representatives: dict[int, int] = {}
    for cid, members in enumerate(ordered):
        representatives[cid] = min(members)
        for row_id in members:
            labels[row_id] = cid
    return ClusterAssignment(labels=labels, representatives=representatives)


def cluster(embeddings: EmbeddingMatrix, params: ClusterParams) -> ClusterAssignment:
    """Cluster valid rows with the chosen algorithm; invalid rows stay singletons."""
    if not embeddings.valid.any():
        raise DataError("clustering needs at least one valid embedding row")
    valid_pos = np.flatnonzero(embeddings.valid)
    dist = cosine_distance_matrix(embeddings.vectors[valid_pos])
    if params.algorithm == "slink":
        groups = slink_partition(dist, params.threshold)
    elif params.algorithm == "agglomerative":
        groups = agglomerative_partition(dist, params.threshold, params.linkage_mode)
    else:
        groups = dbscan_partition(dist, params.eps, params.min_samples)

    row_ids = [int(embeddings.row_ids[p]) for p in valid_pos]
    all_rows = list(row_ids)
    all_groups = list(groups)
    offset = max(groups, default=-1) + 1
    for p in np.flatnonzero(~embeddings.valid):
        all_rows.append(int(embeddings.row_ids[p]))
        all_groups.append(offset)
        offset += 1
    return _canonical_assignment(all_rows, all_groups)
