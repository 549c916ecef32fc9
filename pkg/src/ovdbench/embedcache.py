"""Caption embedding cache and alignment scoring with call accounting.

A caption-conditioned detector pays an encoder cost and an alignment cost for
every (image, caption) pair. Because 3F-OVD captions are shared by all images,
caption embeddings can be computed once and reused; :class:`CostModel` counts
encoder and alignment calls so the saving is observable exactly.
"""
from __future__ import annotations

import hashlib
import struct
import threading
from concurrent.futures import Future
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .errors import DimensionMismatchError, ParseError

MAGIC = b"OVDE"
FORMAT_VERSION = 1


class Embedder(Protocol):
    dim: int

    def __call__(self, text: str) -> np.ndarray: ...


class HashBagEmbedder:
    """Bag-of-tokens embedding: tokens hashed into ``dim`` buckets, L2-normalised.

    Uses blake2b so buckets do not depend on ``PYTHONHASHSEED``. Empty text
    maps to the zero vector.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def __call__(self, text: str) -> np.ndarray:
        from .protocols import tokenize

        v = np.zeros(self.dim, dtype=np.float32)
        for tok in tokenize(text):
            v[self.bucket(tok)] += 1.0
        return normalize(v)


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float32)
    n = float(np.linalg.norm(v.astype(np.float64)))
    if n == 0.0:
        return v.copy()
    return (v.astype(np.float64) / n).astype(np.float32)


@dataclass
class CostModel:
    """Encoder/alignment call counters; ``alpha`` and ``beta`` weight them."""

    encoder_calls: int = 0
    alignment_calls: int = 0
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        self._lock = threading.Lock()

    def add_encoder(self, n: int = 1) -> None:
        with self._lock:
            self.encoder_calls += n

    def add_alignment(self, n: int = 1) -> None:
        with self._lock:
            self.alignment_calls += n

    @property
    def total(self) -> float:
        return self.alpha * self.encoder_calls + self.beta * self.alignment_calls


class EmbeddingCache:
    """Thread-safe memo of text embeddings.

    Concurrent misses on the same key compute the embedding once; the other
    callers wait for that result. With ``enabled=False`` every lookup calls
    the embedder, which is the uncached baseline.
    """

    def __init__(self, cost: CostModel | None = None, enabled: bool = True):
        self.cost = cost if cost is not None else CostModel()
        self.enabled = enabled
        self._lock = threading.Lock()
        self._entries: dict[str, Future] = {}
        self.dim: int | None = None

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def get_or_compute(self, caption: str, embedder: Callable[[str], np.ndarray]) -> np.ndarray:
        return self.lookup(caption, lambda: embedder(caption))

    def lookup(self, key: str, compute: Callable[[], np.ndarray]) -> np.ndarray:
        """Return the value under ``key``, calling ``compute`` at most once per key."""
        if not self.enabled:
            self.cost.add_encoder()
            return compute()
        with self._lock:
            fut = self._entries.get(key)
            owner = fut is None
            if owner:
                fut = self._entries[key] = Future()
        if owner:
            try:
                self.cost.add_encoder()
                value = np.asarray(compute(), dtype=np.float32)
            except BaseException as exc:
                with self._lock:
                    del self._entries[key]
                fut.set_exception(exc)
                raise
            if self.dim is None:
                self.dim = len(value)
            fut.set_result(value)
        return fut.result()

    def items(self):
        for key in sorted(self._entries):
            fut = self._entries[key]
            if fut.done() and fut.exception() is None:
                yield key, fut.result()

    def save(self, path) -> None:
        """Write the cache as ``embeddings.bin``.

        Layout: ``b"OVDE"``, uint32 version, uint32 D, then per entry a uint32
        byte length, the UTF-8 key and D little-endian float32 values.
        """
        entries = list(self.items())
        dim = self.dim or (len(entries[0][1]) if entries else 0)
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<II", FORMAT_VERSION, dim))
            for key, vec in entries:
                raw = key.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)) + raw)
                fh.write(np.asarray(vec, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path, cost: CostModel | None = None) -> "EmbeddingCache":
        data = Path(path).read_bytes()
        if len(data) < 12 or data[:4] != MAGIC:
            raise ParseError(f"{path}: not an embedding cache file")
        version, dim = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported cache version {version}")
        cache = cls(cost=cost)
        cache.dim = dim
        pos = 12
        while pos < len(data):
            if pos + 4 > len(data):
                raise ParseError(f"{path}: truncated record at byte {pos}")
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            end = pos + n + 4 * dim
            if end > len(data):
                raise ParseError(f"{path}: truncated record at byte {pos - 4}")
            key = data[pos : pos + n].decode("utf-8")
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos + n).astype(np.float32)
            fut = Future()
            fut.set_result(vec)
            cache._entries[key] = fut
            pos = end
        return cache


def score_alignment(image_feature: np.ndarray, caption_embedding: np.ndarray, cost: CostModel | None = None) -> float:
    """Cosine similarity between a region feature and a caption embedding.

    Zero vectors score 0.

    Raises:
        DimensionMismatchError: the two vectors differ in length.
    """
    a = np.asarray(image_feature, dtype=np.float64)
    b = np.asarray(caption_embedding, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if cost is not None:
        cost.add_alignment()
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / denom, -1.0, 1.0))
