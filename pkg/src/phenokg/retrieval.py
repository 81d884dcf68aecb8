"""Embedding store and exact top-k cosine retrieval for dynamic few-shot selection.

Two embedders: a remote OpenAI-compatible embeddings endpoint, and a
deterministic hashed bag-of-words fallback (case-folded tokens, FNV-1a
hashed into a fixed 256-dim count vector, L2-normalized). The fallback
matches the remote embedder's interface and determinism guarantees only,
not its retrieval quality. Search is exact and exhaustive; corpora here
are at most a few thousand items.
"""

from __future__ import annotations

import json
import math
import os
import re
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import BackendUnavailableError, DomainError
from .llm import API_KEY_ENV_VAR, ENDPOINT_ENV_VAR, RetryPolicy, backoff_schedule

DEFAULT_DIM = 256

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _fnv1a64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class HashedEmbedder:
    """Deterministic hashed bag-of-words embedder (pure integer hashing)."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise DomainError("embedding dim must be positive")
        self.dim = dim

    def embed_one(self, text: str) -> list[float]:
        counts = [0.0] * self.dim
        for token in _TOKEN_RE.findall(text.casefold()):
            counts[_fnv1a64(token) % self.dim] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        if norm == 0.0:
            return counts  # no tokens: zero vector, cosine treats it as 0 similarity
        return [c / norm for c in counts]

    def embed_many(self, texts: Sequence[str]) -> list[list[float]]:
        return [self.embed_one(t) for t in texts]


class RemoteEmbedder:
    """OpenAI-compatible embeddings endpoint with the shared retry policy."""

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        retry: RetryPolicy = RetryPolicy(),
        timeout: float = 30.0,
    ):
        self.endpoint_url = os.environ.get(ENDPOINT_ENV_VAR) or endpoint_url
        self.api_key = os.environ.get(API_KEY_ENV_VAR, "")
        self.model_name = model_name
        self.retry = retry
        self.timeout = timeout

    def embed_many(self, texts: Sequence[str]) -> list[list[float]]:
        delays = backoff_schedule(self.retry)
        last_error = ""
        for attempt in range(1, self.retry.max_attempts + 1):
            try:
                return self._post_once(texts)
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = str(exc)
            if attempt < self.retry.max_attempts:
                time.sleep(delays[attempt - 1])
        raise BackendUnavailableError(
            f"embeddings backend unavailable after {self.retry.max_attempts} attempts: {last_error}",
            attempts=self.retry.max_attempts,
        )

    def _post_once(self, texts: Sequence[str]) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(
            self.endpoint_url,
            json={"model": self.model_name, "input": list(texts)},
            headers=headers,
            timeout=self.timeout,
        )
        resp.raise_for_status()
        data = resp.json()["data"]
        return [row["embedding"] for row in sorted(data, key=lambda r: r["index"])]


def embed(embedder, texts: Sequence[str]) -> list[list[float]]:
    """One vector per text, order-preserving."""
    if not texts:
        raise DomainError("embed requires a nonempty text list")
    vectors = embedder.embed_many(texts)
    for vec in vectors:
        _validate_vector(vec)
    return vectors


def _validate_vector(vec: Sequence[float]) -> None:
    if len(vec) == 0:
        raise DomainError("embedding vector must be nonempty")
    if not all(math.isfinite(v) for v in vec):
        raise DomainError("embedding vector contains non-finite entries")


class EmbeddingIndex:
    """Immutable id -> vector store with uniform dimensionality."""

    def __init__(self, items: Sequence[tuple[str, Sequence[float]]]):
        self._ids: list[str] = []
        vectors = []
        self.dim: int | None = None
        seen = set()
        for item_id, vec in items:
            _validate_vector(vec)
            if self.dim is None:
                self.dim = len(vec)
            elif len(vec) != self.dim:
                raise DomainError(f"vector for {item_id!r} has dim {len(vec)}, index dim is {self.dim}")
            if item_id in seen:
                raise DomainError(f"duplicate item id {item_id!r}")
            seen.add(item_id)
            self._ids.append(item_id)
            vectors.append(np.asarray(vec, dtype=np.float64))
        self._id_set = seen
        self._matrix = np.vstack(vectors) if vectors else np.zeros((0, 0))
        self._norms = np.linalg.norm(self._matrix, axis=1) if vectors else np.zeros(0)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._id_set

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, item_id: str) -> list[float]:
        return self._matrix[self._ids.index(item_id)].tolist()


def build_index(embedder, items: dict[str, str] | Sequence[tuple[str, str]]) -> EmbeddingIndex:
    """Embed a mapping of item_id -> text into an index (insertion order kept)."""
    pairs = list(items.items()) if isinstance(items, dict) else list(items)
    if not pairs:
        raise DomainError("cannot build an index from zero items")
    vectors = embed(embedder, [text for _, text in pairs])
    return EmbeddingIndex([(item_id, vec) for (item_id, _), vec in zip(pairs, vectors)])


def top_k(
    index: EmbeddingIndex,
    query: Sequence[float],
    k: int,
    exclude: set[str] | frozenset[str] = frozenset(),
) -> list[tuple[str, float]]:
    """Exact top-k by cosine similarity, descending; ties broken by ascending id.

    Scores are compared at 1e-12 resolution so that mathematically tied
    items fall into the deterministic id order regardless of the floating
    accumulation order underneath; returned scores are unquantized.
    Returns min(k, remaining items) entries; zero-norm vectors score 0;
    ``exclude`` drops item ids before ranking (query self-exclusion).
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise DomainError("index is empty")
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or (index.dim is not None and q.shape[0] != index.dim):
        raise DomainError(f"query dim {q.shape} does not match index dim {index.dim}")
    if not np.all(np.isfinite(q)):
        raise DomainError("query vector contains non-finite entries")
    q_norm = float(np.linalg.norm(q))
    dots = index._matrix @ q
    denom = index._norms * q_norm
    safe = np.where(denom == 0.0, 1.0, denom)
    scores = np.where(denom == 0.0, 0.0, dots / safe)
    ranked = [
        (item_id, float(score))
        for item_id, score in zip(index.ids, scores)
        if item_id not in exclude
    ]
    ranked.sort(key=lambda pair: (-round(pair[1], 12), pair[0]))
    return ranked[:k]


def save_index(index: EmbeddingIndex, path: str | Path) -> None:
    """Persist as JSON Lines of {item_id, vector}."""
    with open(path, "w", encoding="utf-8") as fh:
        for item_id in index.ids:
            fh.write(json.dumps({"item_id": item_id, "vector": index.vector(item_id)}) + "\n")


def load_index(path: str | Path) -> EmbeddingIndex:
    items = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        items.append((record["item_id"], record["vector"]))
    return EmbeddingIndex(items)
