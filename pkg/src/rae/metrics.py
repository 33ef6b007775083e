"""Exact k-NN search and k-NN preservation accuracy.

Both metrics are distances (smaller is nearer). Cosine is taken as
``1 - x.y / (|x| |y|)``, which orders neighbours exactly as the cosine
similarity does. Ties go to the smaller index and the anchor is never its
own neighbour.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingSet

METRICS = ("euclidean", "cosine")
MIN_COSINE_NORM = 1e-12


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class NeighborSet:
    anchor: int
    neighbors: np.ndarray
    distances: np.ndarray


@dataclass
class EvalReport:
    k: int
    metric: str
    per_anchor: np.ndarray = field(repr=False)
    overall: float

    def to_dict(self, per_anchor: bool = True) -> dict:
        out = {"k": self.k, "metric": self.metric, "overall": self.overall}
        if per_anchor:
            out["per_anchor"] = [float(x) for x in self.per_anchor]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise MetricError(f"unknown metric {metric!r}; expected one of {METRICS}")


def distance(x, y, metric: str = "euclidean") -> float:
    _check_metric(metric)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"vectors must be 1-D of equal length, got {x.shape} and {y.shape}")
    if metric == "euclidean":
        diff = x - y
        return float(np.sqrt(np.dot(diff, diff)))
    nx = float(np.sqrt(np.dot(x, x)))
    ny = float(np.sqrt(np.dot(y, y)))
    if nx <= MIN_COSINE_NORM or ny <= MIN_COSINE_NORM:
        raise MetricError("cosine distance is undefined for a zero vector")
    return 1.0 - float(np.dot(x, y)) / (nx * ny)


class _Index:
    """Corpus prepared for repeated single-anchor distance rows."""

    def __init__(self, vectors: np.ndarray, metric: str):
        _check_metric(metric)
        self.metric = metric
        self.x = np.ascontiguousarray(vectors, dtype=np.float64)
        if metric == "cosine":
            norms = np.sqrt(np.einsum("ij,ij->i", self.x, self.x))
            small = np.flatnonzero(norms <= MIN_COSINE_NORM)
            if small.size:
                raise MetricError(
                    f"cosine metric needs non-zero vectors; vector {int(small[0])} has norm "
                    f"{norms[small[0]]:.3e}"
                )
            self.norms = norms

    def row(self, a: int) -> np.ndarray:
        if self.metric == "euclidean":
            diff = self.x - self.x[a]
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return 1.0 - (self.x @ self.x[a]) / (self.norms * self.norms[a])

    def neighbors(self, a: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        d = self.row(a)
        d[a] = np.inf
        order = np.argsort(d, kind="stable")[:k]
        return order, d[order]


def _check_k(k: int, count: int) -> None:
    if not 1 <= k <= count - 1:
        raise MetricError(f"k must lie in [1, {count - 1}] for {count} vectors, got {k}")


def knn(corpus: EmbeddingSet, anchor: int, k: int, metric: str = "euclidean") -> NeighborSet:
    _check_k(k, corpus.count)
    if not 0 <= anchor < corpus.count:
        raise MetricError(f"anchor {anchor} out of range for {corpus.count} vectors")
    idx, dist = _Index(corpus.vectors, metric).neighbors(anchor, k)
    return NeighborSet(anchor, idx, dist)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RAE_THREADS", "1")))
    except ValueError:
        return 1


def knn_table(vectors: np.ndarray, k: int, metric: str = "euclidean") -> np.ndarray:
    """``(N, k)`` neighbour indices for every anchor, nearest first."""
    n = vectors.shape[0]
    _check_k(k, n)
    index = _Index(vectors, metric)
    out = np.empty((n, k), dtype=np.int64)

    def fill(rows):
        for a in rows:
            out[a] = index.neighbors(a, k)[0]

    threads = _threads()
    if threads == 1 or n < 256:
        fill(range(n))
    else:
        chunks = np.array_split(np.arange(n), threads * 4)
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, chunks))
    return out


def overlap_counts(original: np.ndarray, reduced: np.ndarray) -> np.ndarray:
    """Per-anchor ``|A & B|`` for two neighbour tables."""
    hits = np.empty(original.shape[0], dtype=np.int64)
    for a, (x, y) in enumerate(zip(original, reduced)):
        hits[a] = np.intersect1d(x, y, assume_unique=True).size
    return hits


def _report(hits: np.ndarray, k: int, metric: str) -> EvalReport:
    # Integer total over k*N keeps ``overall`` exact.
    return EvalReport(k, metric, hits / k, int(hits.sum()) / (k * hits.size))


def preservation_accuracy(
    original: EmbeddingSet, reduced: EmbeddingSet, k: int, metric: str = "euclidean"
) -> EvalReport:
    if original.count != reduced.count:
        raise MetricError(
            f"original has {original.count} vectors but reduced has {reduced.count}"
        )
    hits = overlap_counts(knn_table(original.vectors, k, metric), knn_table(reduced.vectors, k, metric))
    return _report(hits, k, metric)


def preservation_sweep(
    original: EmbeddingSet, reduced: EmbeddingSet, ks, metric: str = "euclidean"
) -> dict[int, EvalReport]:
    """One report per ``k``, sharing a single neighbour search per space."""
    ks = sorted(set(int(k) for k in ks))
    if original.count != reduced.count:
        raise MetricError(
            f"original has {original.count} vectors but reduced has {reduced.count}"
        )
    kmax = ks[-1]
    base = knn_table(original.vectors, kmax, metric)
    red = knn_table(reduced.vectors, kmax, metric)
    out = {}
    for k in ks:
        _check_k(k, original.count)
        out[k] = _report(overlap_counts(base[:, :k], red[:, :k]), k, metric)
    return out
