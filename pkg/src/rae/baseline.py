"""PCA baseline via eigendecomposition of the sample covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EmbeddingSet
from .linalg import sym_eigen
from .model import ModelError, _read_model_file, _take, _write_model_file

MAGIC = b"PCADR1\n"


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.components.shape[0]


def pca_fit(data: EmbeddingSet, m: int) -> PCAModel:
    """Top-``m`` principal directions of the covariance (divisor N-1).

    Each component is flipped so that its largest-magnitude entry is
    positive. ``m == n`` is accepted and gives a pure change of basis.
    """
    x = data.vectors
    count, n = x.shape
    if not 0 < m <= n:
        raise ValueError(f"need 0 < m <= n, got n={n}, m={m}")
    if count < 2:
        raise ValueError("PCA needs at least two vectors")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (count - 1)
    eig = sym_eigen(0.5 * (cov + cov.T))
    comps = eig.eigenvectors[:, :m].T.copy()
    lead = np.argmax(np.abs(comps), axis=1)
    signs = np.where(comps[np.arange(m), lead] < 0, -1.0, 1.0)
    comps *= signs[:, None]
    values = np.clip(eig.eigenvalues[:m], 0.0, None)
    return PCAModel(mean, comps, values)


def pca_transform(model: PCAModel, data: EmbeddingSet) -> EmbeddingSet:
    if data.dim != model.input_dim:
        raise ValueError(f"data dim {data.dim} does not match PCA input dim {model.input_dim}")
    return EmbeddingSet((data.vectors - model.mean) @ model.components.T, f"pca({data.source})")


def save_pca(model: PCAModel, path) -> None:
    header = {"n": model.input_dim, "m": model.latent_dim, "config": {"method": "pca"}}
    _write_model_file(path, MAGIC, header, (model.mean, model.components, model.eigenvalues))


def load_pca(path) -> PCAModel:
    header, body = _read_model_file(path, MAGIC)
    try:
        n, m = int(header["n"]), int(header["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: header lacks n/m") from exc
    if not 0 < m <= n:
        raise ModelError(f"{path}: invalid shape n={n}, m={m}")
    mean, off = _take(body, 0, (n,), path)
    comps, off = _take(body, off, (m, n), path)
    values, off = _take(body, off, (m,), path)
    if off != len(body):
        raise ModelError(f"{path}: {len(body) - off} trailing bytes")
    return PCAModel(mean, comps, values)
