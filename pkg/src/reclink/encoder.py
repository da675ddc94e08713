"""Trainable hashed character-n-gram encoder producing unit-norm embeddings.

The built-in encoder is a linear model: character n-grams of the lowercased
text are hashed into a fixed number of buckets, the count vector is
l1-normalized, projected by a dense trainable matrix, and l2-normalized.
It is deliberately simple so that training has exact analytic gradients;
heavier models enter through the remote provider instead.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MODEL_FORMAT = "reclink-encoder-model"
MODEL_VERSION = 1

# |norm - 1| bound every valid embedding satisfies.
UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class EncoderConfig:
    ngram_min: int = 2
    ngram_max: int = 4
    n_buckets: int = 32768
    embed_dim: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise DataError(f"need 1 <= ngram_min <= ngram_max, got [{self.ngram_min}, {self.ngram_max}]")
        if not (self.n_buckets >= self.embed_dim >= 2):
            raise DataError(f"need n_buckets >= embed_dim >= 2, got {self.n_buckets}, {self.embed_dim}")


@dataclass(frozen=True)
class FeatureVector:
    """Sparse n-gram counts: parallel (bucket index, count) arrays."""

    indices: np.ndarray  # int64, unique, sorted
    counts: np.ndarray   # float64

    @property
    def nnz(self) -> int:
        return len(self.indices)


def _bucket(ngram: str, seed: int, n_buckets: int) -> int:
    # Keyed blake2b keeps hashing stable across runs, platforms and releases.
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b(ngram.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little") % n_buckets


def featurize(text: str, config: EncoderConfig) -> FeatureVector:
    """Count all character n-grams of the lowercased text, hashed into buckets."""
    text = text.lower()
    counts: dict[int, float] = {}
    for n in range(config.ngram_min, config.ngram_max + 1):
        for start in range(len(text) - n + 1):
            idx = _bucket(text[start:start + n], config.seed, config.n_buckets)
            counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return FeatureVector(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
    indices = np.fromiter(sorted(counts), dtype=np.int64, count=len(counts))
    values = np.array([counts[i] for i in indices], dtype=np.float64)
    return FeatureVector(indices, values)


@dataclass
class EncoderModel:
    config: EncoderConfig
    weights: np.ndarray  # (n_buckets, embed_dim) float64, the trainable projection

    def __post_init__(self) -> None:
        expected = (self.config.n_buckets, self.config.embed_dim)
        if self.weights.shape != expected:
            raise DataError(f"weight shape {self.weights.shape} does not match config {expected}")
        if not np.isfinite(self.weights).all():
            raise DataError("encoder weights contain non-finite values")

    def copy(self) -> "EncoderModel":
        return EncoderModel(self.config, self.weights.copy())


def init_model(config: EncoderConfig) -> EncoderModel:
    """Fresh model with i.i.d. uniform weights in [-1/sqrt(D), 1/sqrt(D)]."""
    rng = np.random.default_rng(config.seed)
    bound = 1.0 / np.sqrt(config.n_buckets)
    weights = rng.uniform(-bound, bound, size=(config.n_buckets, config.embed_dim))
    return EncoderModel(config, weights)


def embed_features(weights: np.ndarray, feats: FeatureVector) -> np.ndarray | None:
    """Project l1-normalized counts and l2-normalize; None if no signal."""
    if feats.nnz == 0:
        return None
    fhat = feats.counts / max(feats.counts.sum(), 1.0)
    u = fhat @ weights[feats.indices]
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        return None
    return u / norm


def embed_texts(model: EncoderModel, texts: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Embed texts with the built-in encoder.

    Returns (vectors, valid): vectors is (n, embed_dim) float64 with unit-norm
    rows where valid, all-zero rows where not (texts with no n-grams).
    """
    n = len(texts)
    vectors = np.zeros((n, model.config.embed_dim), dtype=np.float64)
    valid = np.zeros(n, dtype=bool)
    for i, text in enumerate(texts):
        v = embed_features(model.weights, featurize(text, model.config))
        if v is not None:
            vectors[i] = v
            valid[i] = True
    return vectors, valid


@dataclass
class EmbeddingMatrix:
    """Row ids plus unit-norm float vectors; invalid rows are all-zero."""

    row_ids: np.ndarray  # int64
    vectors: np.ndarray  # (n, dim) float64
    valid: np.ndarray    # bool

    def __post_init__(self) -> None:
        self.row_ids = np.asarray(self.row_ids, dtype=np.int64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.vectors.ndim != 2:
            raise DataError("embedding matrix must be 2-dimensional")
        if not (len(self.row_ids) == len(self.vectors) == len(self.valid)):
            raise DataError("embedding matrix fields disagree on row count")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.row_ids)


def save_model(model: EncoderModel, path: str | Path) -> None:
    """Write the model: a json header line, then row-major little-endian f64 weights."""
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())


def load_model(path: str | Path) -> EncoderModel:
    """Load a model written by save_model; round-trips bit-exactly."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such model file: {path}")
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise DataError(f"{path}: not a reclink encoder model (bad header)") from None
    if not isinstance(header, dict) or header.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a reclink encoder model")
    if header.get("version") != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {header.get('version')!r}")
    try:
        config = EncoderConfig(**header["config"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: invalid model config: {exc}") from None
    expected = config.n_buckets * config.embed_dim * 8
    if len(blob) != expected:
        raise DataError(f"{path}: truncated or corrupt weights ({len(blob)} bytes, expected {expected})")
    weights = np.frombuffer(blob, dtype="<f8").reshape(config.n_buckets, config.embed_dim)
    return EncoderModel(config, weights.astype(np.float64))
