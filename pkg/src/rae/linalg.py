"""Dense real linear algebra on float64 numpy arrays.

Matrices are plain 2-D ``float64`` ndarrays. ``as_matrix`` is the gate
every public entry point goes through: it copies nothing when it does not
have to and rejects ragged, empty or non-finite input.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_SWEEPS = 100
SYMMETRY_TOL = 1e-9
OFF_DIAGONAL_TOL = 1e-12
CLAMP_TOL = 1e-10


class LinAlgError(ValueError):
    pass


class ConvergenceError(LinAlgError):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise LinAlgError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise LinAlgError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise LinAlgError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order; column ``j`` of ``eigenvectors``
    is the unit eigenvector belonging to ``eigenvalues[j]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise LinAlgError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def gram(w) -> np.ndarray:
    """``W @ W.T``, symmetrized exactly."""
    w = as_matrix(w, "w")
    g = w @ w.T
    return 0.5 * (g + g.T)


def frobenius_norm(w) -> float:
    return float(np.sqrt(np.sum(np.square(as_matrix(w)))))


@lru_cache(maxsize=64)
def _round_robin(n: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Disjoint index pairs for each round of a cyclic sweep.

    Circle-method tournament: over ``n - 1`` rounds (``n`` padded to even)
    every pair ``p < q`` meets exactly once, and pairs within a round share
    no index, so their rotations commute and can be applied together.
    """
    players = list(range(n + (n % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def _rotate_rows(x: np.ndarray, p, q, c, s) -> None:
    xp = x[p]
    xq = x[q]
    x[p] = c * xp - s * xq
    x[q] = s * xp + c * xq


def sym_eigen(m, max_sweeps: int = MAX_SWEEPS) -> EigenDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi.

    Each sweep visits every off-diagonal pair once in round-robin order.
    Iteration stops once the off-diagonal Frobenius mass falls below
    ``1e-12 * ||m||_F``; failing that within ``max_sweeps`` sweeps raises
    ``ConvergenceError``.
    """
    a = as_matrix(m, "m").copy()
    n, cols = a.shape
    if n != cols:
        raise LinAlgError(f"sym_eigen needs a square matrix, got {a.shape}")
    scale = float(np.sqrt(np.sum(a * a)))
    asym = float(np.max(np.abs(a - a.T)))
    if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(a)))):
        raise LinAlgError(f"matrix is not symmetric (max |m - m.T| = {asym:.3e})")
    a = 0.5 * (a + a.T)
    # Rotations act on rows only (contiguous); a transpose between the two
    # one-sided passes turns the column update into a row update.
    vt = np.eye(n)
    target = OFF_DIAGONAL_TOL * scale

    sweeps = 0
    while _off_norm(a) > target:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {_off_norm(a):.3e}, target {target:.3e})"
            )
        for p, q in _round_robin(n):
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            app = a[p, p]
            aqq = a[q, q]
            safe = np.where(active, apq, 1.0)
            # A subnormal apq overflows theta to inf, giving t = 0: no rotation.
            with np.errstate(over="ignore"):
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = (1.0 / np.sqrt(t * t + 1.0))[:, None]
            s = t[:, None] * c

            _rotate_rows(a, p, q, c, s)
            a = a.T.copy()
            _rotate_rows(a, p, q, c, s)
            a[p, q] = 0.0
            a[q, p] = 0.0
            _rotate_rows(vt, p, q, c, s)
        sweeps += 1

    v = vt.T
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return EigenDecomposition(values[order], v[:, order], sweeps)


def singular_values(w) -> np.ndarray:
    """Singular values, descending, from the smaller Gram matrix.

    Round-off can push zero eigenvalues of the Gram matrix slightly
    negative; those within ``1e-10 * max(1, lambda_max)`` are clamped to 0,
    anything more negative means the Gram matrix is broken.
    """
    w = as_matrix(w, "w")
    if w.shape[0] > w.shape[1]:
        w = w.T
    eig = sym_eigen(gram(w)).eigenvalues
    floor = -CLAMP_TOL * max(1.0, float(eig[0]))
    if eig[-1] < floor:
        raise LinAlgError(f"Gram matrix has negative eigenvalue {eig[-1]:.3e}")
    return np.sqrt(np.clip(eig, 0.0, None))
