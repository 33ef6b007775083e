"""Embedding corpora: file formats, train/test split, mini-batches.

Supported on-disk formats:

``fvecs``
    per vector: little-endian int32 dimension ``d`` then ``d`` little-endian
    float32 values, repeated to EOF.
``csv``
    one vector per line, comma-separated decimals, no header.
``rawf32``
    little-endian float32, row-major, with a sidecar
    ``<stem>.manifest.json`` holding ``{"rows": N, "cols": n}``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .rng import LaneGenerator, Xoshiro256, lane_seeds

FORMATS = ("fvecs", "csv", "rawf32")


class DataError(ValueError):
    """Raised for unreadable, malformed or inconsistent embedding data."""


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray
    source: str = ""

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"embedding set needs a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.argwhere(~np.isfinite(v))[0, 0])
            raise DataError(f"non-finite value in vector {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def subset(self, rows, label: str) -> "EmbeddingSet":
        return EmbeddingSet(self.vectors[np.asarray(rows)], f"{self.source}[{label}]")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in ("fvecs", "csv"):
        return suffix
    if suffix in ("rawf32", "f32", "bin"):
        return "rawf32"
    raise DataError(f"cannot infer format from {path!s}; pass one of {FORMATS}")


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


# -- loading ---------------------------------------------------------------


def load_embeddings(path, format: str | None = None) -> EmbeddingSet:
    path = Path(path)
    fmt = format or infer_format(path)
    if fmt == "fvecs":
        vectors = _read_fvecs(path)
    elif fmt == "csv":
        vectors = _read_csv(path)
    elif fmt == "rawf32":
        vectors = _read_rawf32(path)
    else:
        raise DataError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    return EmbeddingSet(vectors, str(path))


def _read_bytes(path: Path) -> bytes:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    if not raw:
        raise DataError(f"{path}: file is empty")
    return raw


def _read_fvecs(path: Path) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise DataError(f"{path}: truncated header at byte 0")
    dim = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    if dim <= 0:
        raise DataError(f"{path}: invalid dimension {dim} at byte 0")
    record = 4 * (dim + 1)
    if len(raw) % record:
        # Locate the first bad record for the message.
        offset = 0
        while offset + record <= len(raw):
            d = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
            if d != dim:
                break
            offset += record
        if offset + 4 <= len(raw):
            d = int(np.frombuffer(raw, dtype="<i4", count=1, offset=offset)[0])
            if d != dim:
                raise DataError(
                    f"{path}: dimension {d} at byte {offset} disagrees with {dim}"
                )
        raise DataError(f"{path}: truncated record at byte {offset}")
    table = np.frombuffer(raw, dtype="<i4").reshape(-1, dim + 1)
    dims = table[:, 0]
    bad = np.flatnonzero(dims != dim)
    if bad.size:
        row = int(bad[0])
        raise DataError(
            f"{path}: dimension {int(dims[row])} at byte {row * record} disagrees with {dim}"
        )
    values = table[:, 1:].copy().view("<f4").astype(np.float64)
    _check_finite(path, values, lambda r, c: f"byte {r * record + 4 * (c + 1)}")
    return values


def _read_csv(path: Path) -> np.ndarray:
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}: line {lineno} has {len(row)} values, expected {width}")
        if not all(math.isfinite(v) for v in row):
            raise DataError(f"{path}: line {lineno}: non-finite value")
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: file is empty")
    return np.array(rows, dtype=np.float64)


def _read_rawf32(path: Path) -> np.ndarray:
    mpath = manifest_path(path)
    try:
        manifest = json.loads(mpath.read_text())
        rows, cols = int(manifest["rows"]), int(manifest["cols"])
    except OSError as exc:
        raise DataError(f"{mpath}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{mpath}: malformed manifest ({exc})") from exc
    if rows <= 0 or cols <= 0:
        raise DataError(f"{mpath}: rows and cols must be positive")
    raw = _read_bytes(path)
    expected = 4 * rows * cols
    if len(raw) != expected:
        raise DataError(
            f"{path}: {len(raw)} bytes but manifest {rows}x{cols} needs {expected}"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).astype(np.float64)
    _check_finite(path, values, lambda r, c: f"byte {4 * (r * cols + c)}")
    return values


def _check_finite(path, values, where):
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = (int(x) for x in bad[0])
        raise DataError(f"{path}: non-finite value at {where(r, c)} (vector {r})")


# -- saving ----------------------------------------------------------------


def save_embeddings(embeddings: EmbeddingSet, path, format: str | None = None) -> None:
    """Write ``embeddings``; the target appears atomically or not at all."""
    path = Path(path)
    fmt = format or infer_format(path)
    v = embeddings.vectors
    if fmt == "fvecs":
        table = np.empty((v.shape[0], v.shape[1] + 1), dtype="<i4")
        table[:, 0] = v.shape[1]
        table[:, 1:] = v.astype("<f4").view("<i4")
        _atomic_write(path, table.tobytes())
    elif fmt == "csv":
        lines = [",".join(repr(x) for x in row) for row in v.tolist()]
        _atomic_write(path, ("\n".join(lines) + "\n").encode())
    elif fmt == "rawf32":
        _atomic_write(path, v.astype("<f4").tobytes())
        manifest = json.dumps({"rows": v.shape[0], "cols": v.shape[1]}) + "\n"
        _atomic_write(manifest_path(path), manifest.encode())
    else:
        raise DataError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def _atomic_write(path: Path, payload: bytes) -> None:
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    except OSError as exc:
        raise DataError(f"{path}: cannot write ({exc.strerror or exc})") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise DataError(f"{path}: cannot write ({exc.strerror or exc})") from exc


# -- splitting and batching ------------------------------------------------


def split_sizes(count: int, train_fraction: float) -> tuple[int, int]:
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train fraction must lie in (0, 1), got {train_fraction}")
    # 1e-9 guard keeps e.g. 100 * 0.29 from flooring to 28.
    n_train = math.floor(count * train_fraction + 1e-9)
    if n_train < 1 or count - n_train < 1:
        raise DataError(
            f"split of {count} vectors at fraction {train_fraction} leaves an empty side"
        )
    return n_train, count - n_train


def split_indices(count: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    n_train, _ = split_sizes(count, spec.train_fraction)
    perm = Xoshiro256(spec.seed).permutation(count)
    return perm[:n_train], perm[n_train:]


def train_test_split(
    embeddings: EmbeddingSet, spec: SplitSpec
) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Shuffled split: the first ``floor(N * fraction)`` rows of a seeded
    Fisher-Yates permutation train, the rest test."""
    train_idx, test_idx = split_indices(embeddings.count, spec)
    return embeddings.subset(train_idx, "train"), embeddings.subset(test_idx, "test")


def batch_stream(embeddings: EmbeddingSet, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    """Endless mini-batches; each epoch is a fresh permutation drawn from
    one continuing stream, and an epoch's short tail batch is kept."""
    n = embeddings.count
    if batch_size < 1 or batch_size > n:
        raise DataError(f"batch size must be in [1, {n}], got {batch_size}")
    rng = Xoshiro256(seed)
    vectors = embeddings.vectors
    while True:
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield vectors[perm[start:start + batch_size]]


# -- synthetic corpora -----------------------------------------------------


def anisotropic_gaussian(
    count: int, dim: int, decay: float = 0.9, scale: float = 1.0, seed: int = 0,
    rotate: bool = True,
) -> EmbeddingSet:
    """Zero-mean Gaussian cloud whose covariance eigenvalues fall
    geometrically: ``scale * decay**i`` for ``i = 0 .. dim-1``.

    Row ``r`` is drawn from its own stream seeded ``seed + r``. With
    ``rotate`` the principal axes are turned by a random orthogonal matrix
    (QR of a Gaussian matrix drawn from stream ``seed + count``) so that
    they are not aligned with the coordinate axes.
    """
    if count < 1 or dim < 1:
        raise DataError("count and dim must be positive")
    if not 0.0 < decay <= 1.0:
        raise DataError(f"decay must lie in (0, 1], got {decay}")
    z = LaneGenerator(lane_seeds(seed, count)).normal(dim)
    std = np.sqrt(scale * decay ** np.arange(dim, dtype=np.float64))
    x = z * std
    if rotate:
        g = Xoshiro256((seed + count) & ((1 << 64) - 1)).normal_array(dim * dim)
        q, r = np.linalg.qr(g.reshape(dim, dim))
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        x = x @ q.T
    return EmbeddingSet(x, f"synthetic:anisotropic(N={count},n={dim},decay={decay},seed={seed})")
