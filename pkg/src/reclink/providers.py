"""Embedding providers: the built-in encoder or a remote embeddings API.

The remote side speaks an OpenAI-compatible embeddings endpoint: POST
{endpoint}/embeddings with {"model": ..., "input": [...]}, bearer token from
a configurable environment variable, response rows reordered by "index".
Any conforming service works; this is how multilingual transformer
embeddings (and hence cross-lingual linkage) enter the package.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import requests

from .encoder import EmbeddingMatrix, EncoderModel, embed_texts, load_model
from .errors import DataError, ProviderError
from .textprep import SerializedRecord

DEFAULT_API_KEY_ENV = "RECLINK_API_KEY"
REQUEST_TIMEOUT_S = 60.0


@dataclass
class BuiltinProvider:
    """The trainable hashed n-gram encoder, held in memory."""

    model: EncoderModel

    @classmethod
    def from_path(cls, path: str | Path) -> "BuiltinProvider":
        return cls(load_model(path))


@dataclass(frozen=True)
class RemoteProvider:
    endpoint: str
    model: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise DataError(f"remote batch size must be >= 1, got {self.batch_size}")

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise DataError(f"remote provider needs the {self.api_key_env} environment variable")
        return key


ProviderSpec = Union[BuiltinProvider, RemoteProvider]


def parse_model_spec(spec: str, api_key_env: str = DEFAULT_API_KEY_ENV) -> ProviderSpec:
    """Parse the CLI model grammar: 'builtin:<path>' or 'remote:<model>@<endpoint>'."""
    if spec.startswith("builtin:"):
        path = spec[len("builtin:"):]
        if not path:
            raise DataError("builtin model spec needs a path: builtin:<path>")
        return BuiltinProvider.from_path(path)
    if spec.startswith("remote:"):
        rest = spec[len("remote:"):]
        model, sep, endpoint = rest.partition("@")
        if not sep or not model or not endpoint:
            raise DataError("remote model spec must look like remote:<model>@<endpoint>")
        return RemoteProvider(endpoint=endpoint, model=model, api_key_env=api_key_env)
    raise DataError(f"unrecognized model spec {spec!r}; use builtin:<path> or remote:<model>@<endpoint>")


def _fetch_remote_batch(provider: RemoteProvider, texts: list[str], request_id: str) -> list[list[float]]:
    url = provider.endpoint.rstrip("/") + "/embeddings"
    try:
        response = requests.post(
            url,
            json={"model": provider.model, "input": texts},
            headers={"Authorization": f"Bearer {provider.api_key()}"},
            timeout=REQUEST_TIMEOUT_S,
        )
    except requests.RequestException as exc:
        raise ProviderError(f"{request_id}: request failed: {exc}") from exc
    if response.status_code != 200:
        raise ProviderError(f"{request_id}: HTTP {response.status_code}: {response.text[:200]}")
    try:
        payload = response.json()
        data = payload["data"]
        ordered: list[list[float] | None] = [None] * len(texts)
        for item in data:
            ordered[int(item["index"])] = [float(x) for x in item["embedding"]]
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise ProviderError(f"{request_id}: malformed response body: {exc!r}") from None
    if any(v is None for v in ordered):
        raise ProviderError(f"{request_id}: response is missing rows (got {len(data)} of {len(texts)})")
    return ordered  # type: ignore[return-value]


def _embed_remote(records: list[SerializedRecord], provider: RemoteProvider) -> EmbeddingMatrix:
    rows: list[list[float]] = []
    dim: int | None = None
    for start in range(0, len(records), provider.batch_size):
        chunk = records[start:start + provider.batch_size]
        request_id = f"embeddings#{start // provider.batch_size} -> {provider.endpoint}"
        vectors = _fetch_remote_batch(provider, [r.text for r in chunk], request_id)
        for v in vectors:
            if dim is None:
                dim = len(v)
                if dim == 0:
                    raise ProviderError(f"{request_id}: empty embedding vector")
            elif len(v) != dim:
                raise ProviderError(f"{request_id}: embedding dimension changed ({len(v)} != {dim})")
        rows.extend(vectors)
    matrix = np.array(rows, dtype=np.float64).reshape(len(records), dim or 0)
    norms = np.linalg.norm(matrix, axis=1)
    valid = norms > 0
    matrix[valid] /= norms[valid, None]
    matrix[~valid] = 0.0
    return EmbeddingMatrix(
        row_ids=np.array([r.row_id for r in records], dtype=np.int64),
        vectors=matrix,
        valid=valid,
    )


def embed_batch(records: list[SerializedRecord], provider: ProviderSpec) -> EmbeddingMatrix:
    """Embed serialized records, preserving input order.

    Every valid row comes back unit-norm; rows that cannot be embedded
    (builtin texts with no n-grams, remote all-zero vectors) are marked
    invalid and left all-zero.
    """
    if isinstance(provider, BuiltinProvider):
        vectors, valid = embed_texts(provider.model, [r.text for r in records])
        return EmbeddingMatrix(
            row_ids=np.array([r.row_id for r in records], dtype=np.int64),
            vectors=vectors,
            valid=valid,
        )
    if isinstance(provider, RemoteProvider):
        provider.api_key()  # fail fast before any network call
        return _embed_remote(records, provider)
    raise DataError(f"unknown provider type: {type(provider).__name__}")
