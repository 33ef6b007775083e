"""Singular spectrum, condition number and empirical bound checks.

For a linear map ``W`` and any ``x != 0``::

    |Wx|^2 = |x|^2 * R(W^T W, x),   sigma_min |x| <= |Wx| <= sigma_max |x|

where ``sigma_min^2`` is the smallest eigenvalue of ``W^T W``. For a wide
encoder (m < n) that eigenvalue is zero on all of R^n; the m-th singular
value bounds ``|Wx|`` from below only on the row space of ``W``. There,
two equal-norm displacements have their lengths distorted by at most
``kappa(W) = sigma_max / sigma_min`` relative to each other. The checks
below sample random vectors and count how often these statements fail
numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import LinAlgError, as_matrix, frobenius_norm, singular_values, sym_eigen
from .rng import LaneGenerator, lane_seeds

MIN_SAMPLE_NORM = 1e-6
RANK_TOL = 1e-12
IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class SpectrumReport:
    sigma_max: float
    sigma_min: float
    condition_number: float
    spectrum: tuple
    frobenius_norm: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["spectrum"] = list(self.spectrum)
        if math.isinf(self.condition_number):
            out["condition_number"] = None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class BoundCheckResult:
    trials: int
    violations: int
    worst_margin: float
    max_identity_error: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_symmetric(m) -> np.ndarray:
    m = as_matrix(m, "m")
    if m.shape[0] != m.shape[1]:
        raise LinAlgError(f"expected a square matrix, got {m.shape}")
    if np.max(np.abs(m - m.T)) > 1e-9 * max(1.0, float(np.max(np.abs(m)))):
        raise LinAlgError("matrix is not symmetric")
    return m


def rayleigh(m, x) -> float:
    m = _check_symmetric(m)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.shape[0],):
        raise LinAlgError(f"vector of length {m.shape[0]} expected, got shape {x.shape}")
    xx = float(x @ x)
    if xx == 0.0:
        raise LinAlgError("Rayleigh quotient of the zero vector is undefined")
    return float(x @ m @ x) / xx


def random_vectors(dim: int, trials: int, seed: int) -> np.ndarray:
    """``(trials, dim)`` Gaussian vectors; row ``t`` comes from stream
    ``seed + t``. Rows shorter than 1e-6 are redrawn from their own stream."""
    gen = LaneGenerator(lane_seeds(seed, trials))
    x = gen.normal(dim)
    while True:
        short = np.sqrt(np.einsum("ij,ij->i", x, x)) < MIN_SAMPLE_NORM
        if not short.any():
            return x
        fresh = gen.normal(dim)
        x[short] = fresh[short]


def _rayleigh_rows(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x @ m, x) / np.einsum("ij,ij->i", x, x)


def verify_rayleigh_bounds(m, trials: int = 1000, seed: int = 0) -> BoundCheckResult:
    m = _check_symmetric(m)
    eig = sym_eigen(m).eigenvalues
    lo, hi = float(eig[-1]), float(eig[0])
    tol = 1e-9 * (1.0 + abs(hi))
    r = _rayleigh_rows(m, random_vectors(m.shape[0], trials, seed))
    slack = np.minimum(r - lo, hi - r)
    return BoundCheckResult(trials, int(np.sum(slack < -tol)), float(np.min(slack)))


def spectrum_report(w) -> SpectrumReport:
    sv = singular_values(w)
    smax, smin = float(sv[0]), float(sv[-1])
    if smax == 0.0 or smin < RANK_TOL * smax:
        kappa = math.inf
    else:
        kappa = smax / smin
    return SpectrumReport(smax, smin, kappa, tuple(float(s) for s in sv), frobenius_norm(w))


def row_space_basis(w) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis ``V`` (n x r) of the row space of ``w`` and the
    matching non-zero singular values, from the eigenvectors of ``W W^T``."""
    w = as_matrix(w, "w")
    eig = sym_eigen(w @ w.T)
    sv = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    keep = sv > RANK_TOL * max(float(sv[0]), 0.0)
    if not keep.any():
        raise LinAlgError("zero matrix has an empty row space")
    u = eig.eigenvectors[:, keep]
    v = (w.T @ u) / sv[keep]
    return v, sv[keep]


def _sample(w: np.ndarray, trials: int, seed: int, domain: str) -> np.ndarray:
    if domain == "full":
        return random_vectors(w.shape[1], trials, seed)
    if domain == "row_space":
        v, _ = row_space_basis(w)
        return random_vectors(v.shape[1], trials, seed) @ v.T
    raise ValueError(f"domain must be 'full' or 'row_space', got {domain!r}")


def norm_floor(w, domain: str = "full") -> float:
    """Largest ``c`` with ``|Wx| >= c|x|`` for every ``x`` in the domain.

    Over all of R^n this is ``sqrt(lambda_min(W^T W))``, which is zero for
    a wide ``W`` (it has a null space). On the row space it is the smallest
    of the ``min(m, n)`` singular values.
    """
    w = as_matrix(w, "w")
    sv = singular_values(w)
    if domain == "full" and w.shape[0] < w.shape[1]:
        return 0.0
    return float(sv[-1])


def verify_norm_bounds(
    w, trials: int = 1000, seed: int = 0, domain: str = "full"
) -> BoundCheckResult:
    """Checks ``floor*|x| <= |Wx| <= sigma_max*|x|`` (tolerance
    ``1e-9 * sigma_max * |x|``) and ``|Wx|^2 = |x|^2 R(W^T W, x)`` to
    relative 1e-9; a trial failing either counts as a violation.

    ``floor`` is ``norm_floor(w, domain)``; ``domain="row_space"`` draws
    the vectors inside the row space of ``w``.
    """
    w = as_matrix(w, "w")
    smax = float(singular_values(w)[0])
    smin = norm_floor(w, domain)
    x = _sample(w, trials, seed, domain)
    xnorm = np.sqrt(np.einsum("ij,ij->i", x, x))
    wx = x @ w.T
    wxnorm = np.sqrt(np.einsum("ij,ij->i", wx, wx))
    tol = 1e-9 * smax * xnorm
    slack = np.minimum(wxnorm - smin * xnorm, smax * xnorm - wxnorm)
    bad_bounds = slack < -tol

    lhs = wxnorm ** 2
    rhs = xnorm ** 2 * _rayleigh_rows(w.T @ w, x)
    denom = np.maximum(np.abs(lhs), np.finfo(float).tiny)
    ident_err = np.where(lhs == rhs, 0.0, np.abs(lhs - rhs) / denom)
    bad_ident = ident_err > IDENTITY_TOL
    scale = np.where(smax > 0, smax * xnorm, 1.0)
    return BoundCheckResult(
        trials,
        int(np.sum(bad_bounds | bad_ident)),
        float(np.min(slack / scale)),
        float(np.max(ident_err)),
    )


def verify_distortion_bound(
    w, pairs: int = 10000, seed: int = 0, domain: str = "row_space"
) -> BoundCheckResult:
    """For random equal-norm pairs ``d1, d2``: ``|W d1| / |W d2| <= kappa``.

    The bound needs ``|W d| >= sigma_min |d|``, so for a wide ``W`` it only
    holds for displacements in the row space (the default domain); with
    ``domain="full"`` a null-space component makes the ratio unbounded.
    ``worst_margin`` is the smallest ``(kappa - ratio) / kappa`` seen.
    """
    w = as_matrix(w, "w")
    kappa = spectrum_report(w).condition_number
    raw = _sample(w, 2 * pairs, seed, domain)
    d1 = raw[:pairs]
    d2 = raw[pairs:]
    d2 = d2 * (np.linalg.norm(d1, axis=1) / np.linalg.norm(d2, axis=1))[:, None]
    if math.isinf(kappa):
        return BoundCheckResult(pairs, 0, math.inf)
    n1 = np.linalg.norm(d1 @ w.T, axis=1)
    n2 = np.linalg.norm(d2 @ w.T, axis=1)
    with np.errstate(divide="ignore"):
        ratio = n1 / n2
    margin = (kappa - ratio) / kappa
    return BoundCheckResult(pairs, int(np.sum(ratio > kappa + 1e-9)), float(np.min(margin)))
