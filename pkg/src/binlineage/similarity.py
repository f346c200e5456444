"""Pairwise feature-set similarity and a byte n-gram convenience extractor.

Similarity is plain unweighted Jaccard over the binaries' feature-token sets;
it is computed once per dataset and treated as a constant by inference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Dataset, EmptyFeatureSetError, InputTooShortError

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def jaccard(a: frozenset[int] | set[int], b: frozenset[int] | set[int]) -> float:
    """|a ∩ b| / |a ∪ b|; raises EmptyFeatureSetError if either set is empty."""
    if not a or not b:
        raise EmptyFeatureSetError("jaccard needs non-empty feature sets")
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense symmetric matrix of unit-interval similarities, diagonal 1."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "_index", {i: k for k, i in enumerate(self.ids)})

    @property
    def n(self) -> int:
        return len(self.ids)

    def index_of(self, binary_id: str) -> int:
        return self._index[binary_id]  # type: ignore[attr-defined]

    def by_id(self, a: str, b: str) -> float:
        return float(self.values[self.index_of(a), self.index_of(b)])


def similarity_matrix(dataset: Dataset) -> SimilarityMatrix:
    """Jaccard similarity between every pair of binaries in the dataset."""
    n = len(dataset.binaries)
    values = np.ones((n, n), dtype=float)
    feats = [b.features for b in dataset.binaries]
    for i in range(n):
        if not feats[i]:
            raise EmptyFeatureSetError(f"binary {dataset.binaries[i].id!r} has no features")
        for j in range(i + 1, n):
            s = jaccard(feats[i], feats[j])
            values[i, j] = s
            values[j, i] = s
    return SimilarityMatrix(dataset.ids, values)


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash (offset 0xcbf29ce484222325, prime 0x100000001b3)."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


def extract_ngrams(data: bytes, n: int) -> frozenset[int]:
    """Hash every contiguous n-byte window of ``data`` to a 64-bit token.

    Uses FNV-1a (stable across runs and platforms) so extracted feature sets
    are reproducible. Raises InputTooShortError when len(data) < n.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if len(data) < n:
        raise InputTooShortError(f"need at least {n} bytes, got {len(data)}")
    return frozenset(fnv1a_64(data[i : i + n]) for i in range(len(data) - n + 1))
