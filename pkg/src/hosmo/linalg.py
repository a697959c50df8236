"""Small dense numerical kernel.

Tolerance-based rank, minimum-norm row combination and checked square
solves.  All functions are pure; inputs are never modified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentSystemError, SingularMatrixError

#: Condition-number ceiling above which :func:`solve_square` refuses to solve.
SINGULAR_CONDITION = 1e12


@dataclass(frozen=True)
class RankTolerance:
    """Singular-value threshold ``max(absolute, relative * sigma_max)``."""

    relative: float = 1e-9
    absolute: float = 0.0

    def __post_init__(self):
        if self.relative < 0 or self.absolute < 0:
            raise ValueError("rank tolerances must be non-negative")
        if self.relative == 0 and self.absolute == 0:
            raise ValueError("relative and absolute tolerance cannot both be zero")

    def threshold(self, sigma_max: float) -> float:
        return max(self.absolute, self.relative * sigma_max)

    def with_absolute(self, absolute: float) -> "RankTolerance":
        return RankTolerance(self.relative, max(self.absolute, absolute))


DEFAULT_TOL = RankTolerance()


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Convert to a 2-D float (or complex) array and reject NaN/Inf."""
    M = np.atleast_2d(np.asarray(M))
    if M.dtype.kind not in "fc":
        M = M.astype(float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def numerical_rank(M, tol: RankTolerance = DEFAULT_TOL) -> int:
    """Number of singular values strictly above the tolerance threshold.

    Empty and all-zero matrices have rank 0.
    """
    M = np.asarray(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.count_nonzero(s > tol.threshold(s[0])))


def min_norm_row_combination(W, b, tol: RankTolerance = DEFAULT_TOL) -> np.ndarray:
    """Minimum-norm coefficients ``zeta`` with ``zeta @ W == b``.

    Parameters
    ----------
    W : (p, m) array_like
        Rows to combine.
    b : (m,) array_like
        Target row.
    tol : RankTolerance
        ``relative`` is the pseudoinverse cut-off; the consistency check
        accepts residuals up to ``max(absolute, sqrt(relative) * scale)``.

    Returns
    -------
    zeta : (p,) ndarray

    Raises
    ------
    InconsistentSystemError
        If ``b`` is not in the row space of ``W``.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if W.shape[1] != b.shape[0]:
        raise ValueError(f"b has length {b.shape[0]}, W has {W.shape[1]} columns")
    p = W.shape[0]
    if W.size == 0 or not np.any(W):
        if np.linalg.norm(b) > tol.threshold(0.0) and b.size:
            raise InconsistentSystemError("nonzero target with an all-zero W")
        return np.zeros(p)
    s_max = np.linalg.norm(W, 2)
    # the cut-off depends on W alone; the absolute part only loosens the
    # consistency check
    zeta = b @ np.linalg.pinv(W, rcond=tol.relative)
    residual = np.linalg.norm(zeta @ W - b)
    scale = max(np.linalg.norm(b), s_max * np.linalg.norm(zeta))
    if residual > max(tol.absolute, np.sqrt(tol.relative) * scale):
        raise InconsistentSystemError(
            f"target row not in row space of W (residual {residual:.3e})"
        )
    return zeta


def solve_square(H, w, max_condition: float = SINGULAR_CONDITION) -> np.ndarray:
    """Solve ``H @ beta = w`` for square, well-conditioned ``H``.

    Raises
    ------
    SingularMatrixError
        If the 2-norm condition number exceeds ``max_condition``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    w = np.asarray(w, dtype=float)
    if H.shape[0] != H.shape[1]:
        raise ValueError(f"H must be square, got {H.shape}")
    if H.shape[0] == 0:
        return np.zeros_like(w)
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularMatrixError(f"matrix is numerically singular (cond {cond:.3e})")
    return np.linalg.solve(H, w)


def normalize_rows(M) -> np.ndarray:
    """Scale each nonzero row to unit 2-norm (rank preserving)."""
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return M / norms
