"""Adam with weight decay, cosine learning-rate annealing, training loop."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import EmbeddingSet, batch_stream
from .model import REG_MODES, RAEModel, gradients, init_model, loss
from .rng import BATCH_STREAM, INIT_STREAM, MASK64


class TrainingAborted(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    latent_dim: int
    lam: float = 0.0
    steps: int = 3000
    batch_size: int = 128
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    reg_mode: str = "decoupled"

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be positive, got {self.latent_dim}")
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be a finite non-negative number, got {self.lam}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not 0 <= self.lr_min <= self.lr_max:
            raise ValueError(f"need 0 <= lr_min <= lr_max, got {self.lr_min}, {self.lr_max}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.reg_mode not in REG_MODES:
            raise ValueError(f"reg_mode must be one of {REG_MODES}, got {self.reg_mode!r}")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


@dataclass
class TrainHistory:
    step: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    total: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    reg: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.step)

    def append(self, step, lr, value) -> None:
        self.step.append(step)
        self.lr.append(lr)
        self.total.append(value.total)
        self.recon.append(value.reconstruction)
        self.reg.append(value.regularization)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "lr", "total", "recon", "reg"])
        for row in zip(self.step, self.lr, self.total, self.recon, self.reg):
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Per-step cosine annealing from ``lr_max`` (step 0) to ``lr_min``
    (step ``total_steps - 1``)."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    if total_steps == 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / (total_steps - 1)))


def adam_update(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    lam: float = 0.0,
    reg_mode: str = "decoupled",
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam step; returns new params and state.

    In ``decoupled`` mode the decay ``params -= lr * lam * params`` follows
    the Adam step and never enters the moment estimates.
    """
    if params.shape != grads.shape or state.first_moment.shape != params.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient entries")
    t = state.step_count + 1
    m = beta1 * state.first_moment + (1.0 - beta1) * grads
    v = beta2 * state.second_moment + (1.0 - beta2) * (grads * grads)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + epsilon)
    if reg_mode == "decoupled" and lam != 0.0:
        new = new - lr * lam * new
    return new, AdamState(m, v, t)


def train(data: EmbeddingSet, config: TrainConfig) -> tuple[RAEModel, TrainHistory]:
    """Run exactly ``config.steps`` updates; deterministic in (data, config).

    Weights come from stream ``seed + 0`` and batch order from stream
    ``seed + 1``. History records the loss of the batch each update used,
    evaluated before the update.
    """
    n = data.dim
    if config.latent_dim >= n:
        raise ValueError(f"latent_dim {config.latent_dim} must be smaller than input dim {n}")
    if config.batch_size > data.count:
        raise ValueError(f"batch_size {config.batch_size} exceeds {data.count} training vectors")

    model = init_model(n, config.latent_dim, (config.seed + INIT_STREAM) & MASK64)
    enc, dec = model.encoder.copy(), model.decoder.copy()
    s_enc, s_dec = AdamState.zeros_like(enc), AdamState.zeros_like(dec)
    batches = batch_stream(data, config.batch_size, (config.seed + BATCH_STREAM) & MASK64)
    history = TrainHistory()
    adam = dict(beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)

    # Overflow is detected explicitly below, so numpy's warnings are noise.
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(config.steps):
            x = next(batches)
            current = RAEModel(enc, dec)
            value = loss(current, x, config.lam)
            if not math.isfinite(value.total):
                raise TrainingAborted(step, f"non-finite loss {value.total}")
            lr = cosine_lr(step, config.steps, config.lr_max, config.lr_min)
            history.append(step, lr, value)
            g_enc, g_dec = gradients(current, x, config.lam, config.reg_mode)
            try:
                enc, s_enc = adam_update(enc, g_enc, s_enc, lr, config.lam, config.reg_mode, **adam)
                dec, s_dec = adam_update(dec, g_dec, s_dec, lr, config.lam, config.reg_mode, **adam)
            except FloatingPointError as exc:
                raise TrainingAborted(step, str(exc)) from exc
            if not (np.all(np.isfinite(enc)) and np.all(np.isfinite(dec))):
                raise TrainingAborted(step, "weights became non-finite")

    return RAEModel(enc, dec, config.to_dict()), history
