"""Linear regularized auto-encoder: ``x_hat = W_d @ W_e @ x``.

Batches are row-major ``(B, n)`` arrays, so encoding a batch is
``X @ W_e.T``. There are no bias terms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, _atomic_write
from .linalg import as_matrix
from .rng import Xoshiro256

MAGIC = b"RAEDR1\n"
REG_MODES = ("decoupled", "in_loss")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class RAEModel:
    encoder: np.ndarray
    decoder: np.ndarray
    provenance: dict | None = None

    def __post_init__(self):
        enc = as_matrix(self.encoder, "encoder")
        dec = as_matrix(self.decoder, "decoder")
        m, n = enc.shape
        if dec.shape != (n, m):
            raise ModelError(f"decoder shape {dec.shape} does not match encoder {enc.shape}")
        if m >= n:
            raise ModelError(f"latent dim m={m} must be smaller than input dim n={n}")
        object.__setattr__(self, "encoder", enc)
        object.__setattr__(self, "decoder", dec)

    @property
    def input_dim(self) -> int:
        return self.encoder.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.encoder.shape[0]


@dataclass(frozen=True)
class LossValue:
    total: float
    reconstruction: float
    regularization: float


def init_model(n: int, m: int, seed: int) -> RAEModel:
    """Uniform init: encoder on ``[-1/sqrt(n), 1/sqrt(n)]``, then decoder on
    ``[-1/sqrt(m), 1/sqrt(m)]``, both row-major from one stream."""
    if not 0 < m < n:
        raise ModelError(f"need 0 < m < n, got n={n}, m={m}")
    rng = Xoshiro256(seed)
    be = 1.0 / math.sqrt(n)
    bd = 1.0 / math.sqrt(m)
    enc = rng.uniform_array(m * n, -be, be).reshape(m, n)
    dec = rng.uniform_array(n * m, -bd, bd).reshape(n, m)
    return RAEModel(enc, dec, None)


def _batch(model: RAEModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ModelError(f"batch shape {x.shape} does not fit input dim {model.input_dim}")
    return x


def encode(model: RAEModel, x) -> np.ndarray:
    return _batch(model, x) @ model.encoder.T


def reconstruct(model: RAEModel, x) -> np.ndarray:
    return encode(model, x) @ model.decoder.T


def loss(model: RAEModel, x, lam: float) -> LossValue:
    """Batch-mean squared reconstruction error plus
    ``lam * (|W_e|_F^2 + |W_d|_F^2)``."""
    if lam < 0:
        raise ModelError(f"lambda must be non-negative, got {lam}")
    x = _batch(model, x)
    r = reconstruct(model, x) - x
    recon = float(np.sum(r * r) / x.shape[0])
    reg = float(lam * (np.sum(model.encoder ** 2) + np.sum(model.decoder ** 2)))
    return LossValue(recon + reg, recon, reg)


def gradients(
    model: RAEModel, x, lam: float, reg_mode: str = "decoupled"
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(dL/dW_e, dL/dW_d)``.

    With residual ``R = X_hat - X`` and codes ``Z = X @ W_e.T``:
    ``dW_d = 2/B * R.T @ Z`` and ``dW_e = 2/B * W_d.T @ R.T @ X``.
    ``in_loss`` adds ``2 * lam * W``; ``decoupled`` leaves decay to the
    optimizer.
    """
    if reg_mode not in REG_MODES:
        raise ModelError(f"unknown reg_mode {reg_mode!r}; expected one of {REG_MODES}")
    x = _batch(model, x)
    scale = 2.0 / x.shape[0]
    z = x @ model.encoder.T
    r = z @ model.decoder.T - x
    g_dec = scale * (r.T @ z)
    g_enc = scale * ((r @ model.decoder).T @ x)
    if reg_mode == "in_loss":
        g_enc = g_enc + 2.0 * lam * model.encoder
        g_dec = g_dec + 2.0 * lam * model.decoder
    return g_enc, g_dec


# -- persistence -----------------------------------------------------------


def _write_model_file(path, magic: bytes, header: dict, arrays) -> None:
    payload = bytearray(magic)
    payload += (json.dumps(header, sort_keys=True) + "\n").encode()
    for a in arrays:
        payload += np.ascontiguousarray(a, dtype="<f8").tobytes()
    try:
        _atomic_write(Path(path), bytes(payload))
    except DataError as exc:
        raise ModelError(str(exc)) from exc


def _read_model_file(path, magic: bytes) -> tuple[dict, bytes]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ModelError(f"{path}: {exc.strerror or exc}") from exc
    if not raw.startswith(magic):
        raise ModelError(f"{path}: bad magic, expected {magic!r}")
    end = raw.find(b"\n", len(magic))
    if end < 0:
        raise ModelError(f"{path}: missing header line")
    try:
        header = json.loads(raw[len(magic):end])
    except ValueError as exc:
        raise ModelError(f"{path}: corrupt header ({exc})") from exc
    if not isinstance(header, dict):
        raise ModelError(f"{path}: header must be a JSON object")
    return header, raw[end + 1:]


def _take(body: bytes, offset: int, shape, path) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    size = 8 * count
    if offset + size > len(body):
        raise ModelError(f"{path}: truncated weights")
    arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
    return arr.astype(np.float64), offset + size


def save_model(model: RAEModel, path) -> None:
    header = {"n": model.input_dim, "m": model.latent_dim, "config": model.provenance}
    _write_model_file(path, MAGIC, header, (model.encoder, model.decoder))


def load_model(path) -> RAEModel:
    header, body = _read_model_file(path, MAGIC)
    try:
        n, m = int(header["n"]), int(header["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: header lacks n/m") from exc
    if not 0 < m < n:
        raise ModelError(f"{path}: invalid shape n={n}, m={m}")
    enc, off = _take(body, 0, (m, n), path)
    dec, off = _take(body, off, (n, m), path)
    if off != len(body):
        raise ModelError(f"{path}: {len(body) - off} trailing bytes")
    try:
        return RAEModel(enc, dec, header.get("config"))
    except ValueError as exc:
        raise ModelError(f"{path}: {exc}") from exc
