"""Linear-algebra building blocks shared by the solver modules.

Dense SPD solves go through LAPACK Cholesky, sparse solves through SuperLU
and extreme eigenvalues through ARPACK (Lanczos) on a matrix-free operator.
The greedy pivoted Cholesky is written out by hand because node selection
needs its pivot sequence and the per-step residual diagonal, and because it
must work on kernel matrices that are never formed in full.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class Tolerances:
    """Default tolerances used across the package."""

    symmetry: float = 1e-12
    pivot_floor: float = 1e-14  # relative to phi(0) / the largest initial diagonal
    eig_rel: float = 1e-6
    eig_maxiter: int = 5000
    dependence: float = 1e-12  # Gram-Schmidt rejection, relative to the original norm
    k_condition: float = 1e14
    residual_clamp: float = 1e-10
    pivot_tie: float = 1e-12  # pivots within this of the max (relative to the initial max) tie


TOL = Tolerances()


class NotPositiveDefinite(np.linalg.LinAlgError):
    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class Singular(np.linalg.LinAlgError):
    def __init__(self, row: int | None, message: str | None = None):
        self.row = row
        super().__init__(message or f"matrix is singular (row {row})")


class NoConvergence(RuntimeError):
    def __init__(self, message: str, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


def cho_factor(A: np.ndarray):
    """Lower Cholesky factor of an SPD matrix; raises :class:`NotPositiveDefinite`."""
    A = np.asarray(A, dtype=float)
    c, info = sla.lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument to dpotrf ({info})")
    return c


def spd_solve(A, B) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive-definite ``A``.

    Raises :class:`NotPositiveDefinite` (with the zero-based failing pivot)
    when the Cholesky factorization breaks down.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > TOL.symmetry * scale:
        raise ValueError("A is not symmetric")
    c = cho_factor(A)
    X, info = sla.lapack.dpotrs(c, np.asarray(B, dtype=float), lower=1)
    if info != 0:
        raise ValueError(f"dpotrs failed ({info})")
    return X


@dataclass
class PivotedCholesky:
    """Result of a greedy diagonally pivoted Cholesky.

    ``pivots[k]`` is the row chosen at step ``k`` and ``diagonal[k]`` the
    residual diagonal it was chosen with (the squared power function when
    the matrix is a kernel matrix).  ``factor`` holds the computed columns,
    shape ``(len(pivots), M)``, so that ``factor.T @ factor`` reproduces the
    pivot columns of the matrix.
    """

    pivots: np.ndarray
    diagonal: np.ndarray
    factor: np.ndarray
    stopped_early: bool


def pivoted_cholesky_columns(
    diag: np.ndarray,
    column: Callable[[int], np.ndarray],
    k: int,
    stop_tol: float = 0.0,
    allowed: np.ndarray | None = None,
    prior: PivotedCholesky | None = None,
) -> PivotedCholesky:
    """Greedy pivoted Cholesky of an implicitly given SPD matrix.

    Parameters
    ----------
    diag
        Diagonal of the matrix, length ``M``.
    column
        ``column(i)`` returns column ``i`` of the matrix.
    k
        Number of pivots to take.
    stop_tol
        Stop as soon as the largest residual diagonal falls below this value.
    allowed
        Optional boolean mask restricting which rows may become pivots.
    prior
        Continue an earlier factorization of the same matrix; its pivots are
        kept and ``k`` further pivots are taken.

    Ties are broken toward the lowest index.  Residual diagonals within
    ``TOL.pivot_tie`` times the largest initial diagonal of the maximum
    count as tied, so that exact ties in symmetric candidate sets are not
    decided by round-off.
    """
    diag = np.asarray(diag, dtype=float)
    M = diag.size
    if prior is None:
        rows = np.empty((0, M))
        pivots: list[int] = []
        diags: list[float] = []
        d = diag.copy()
    else:
        rows = prior.factor
        pivots = list(prior.pivots)
        diags = list(prior.diagonal)
        d = diag - (rows**2).sum(axis=0)
    start = len(pivots)
    factor = np.zeros((start + k, M))
    factor[:start] = rows
    mask = np.ones(M, dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool).copy()
    mask[pivots] = False
    stopped = False
    tie = TOL.pivot_tie * float(diag.max()) if M else 0.0
    for step in range(start, start + k):
        if not mask.any():
            stopped = True
            break
        cand = np.where(mask, d, -np.inf)
        p = int(np.argmax(cand >= cand.max() - tie))
        dp = cand[p]
        if not dp > stop_tol:
            stopped = True
            break
        col = np.asarray(column(p), dtype=float) - factor[:step].T @ factor[:step, p]
        row = col / np.sqrt(dp)
        row[pivots] = 0.0
        factor[step] = row
        d -= row**2
        pivots.append(p)
        diags.append(float(dp))
        mask[p] = False
    n = len(pivots)
    return PivotedCholesky(np.array(pivots, dtype=np.int64), np.array(diags), factor[:n], stopped)


def pivoted_cholesky_order(A, k: int, stop_tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Pivot order and residual-diagonal trace of a greedy pivoted Cholesky of ``A``.

    Early termination at ``stop_tol`` is a normal outcome; the returned
    arrays are then shorter than ``k``.
    """
    A = np.asarray(A, dtype=float)
    if k > A.shape[0]:
        raise ValueError("k exceeds the matrix dimension")
    res = pivoted_cholesky_columns(np.diag(A).copy(), lambda i: A[:, i], k, stop_tol)
    return res.pivots, res.diagonal


class SparseLU:
    """Reusable sparse LU factorization of a square matrix."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = A.shape
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise Singular(_singular_row(str(exc)), f"sparse LU failed: {exc}") from None
        udiag = np.abs(self._lu.U.diagonal())
        tiny = np.finfo(float).eps * max(udiag.max(initial=0.0), 1.0) * 1e-4
        if np.any(udiag <= tiny):
            raise Singular(int(self._lu.perm_c[np.argmin(udiag)]))

    def solve(self, b, trans: bool = False) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float), trans="T" if trans else "N")


def _singular_row(msg: str) -> int | None:
    digits = [int(t) for t in msg.replace(",", " ").split() if t.isdigit()]
    return digits[-1] if digits else None


def sparse_lu_solve(A, b) -> np.ndarray:
    """One-shot sparse direct solve; use :class:`SparseLU` to reuse the factorization."""
    return SparseLU(A).solve(b)


def extreme_spd_eigen(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    which: str = "largest",
    rel_tol: float = TOL.eig_rel,
    maxiter: int = TOL.eig_maxiter,
    seed: int = 0,
) -> float:
    """Extreme eigenvalue of a symmetric positive-definite operator.

    For ``which="largest"`` ``apply`` is the operator itself.  For
    ``which="smallest"`` ``apply`` must apply the *inverse* operator (for
    instance through a stored factorization); the largest eigenvalue of the
    inverse is found and inverted.
    """
    if which not in ("largest", "smallest"):
        raise ValueError("which must be 'largest' or 'smallest'")
    if dim <= 3:
        M = np.column_stack([apply(e) for e in np.eye(dim)])
        lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    else:
        op = spla.LinearOperator((dim, dim), matvec=apply, dtype=float)
        v0 = np.random.default_rng(seed).standard_normal(dim)
        try:
            vals = spla.eigsh(op, k=1, which="LA", v0=v0, tol=rel_tol * 1e-3, maxiter=maxiter,
                              return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            last = exc.eigenvalues[0] if len(exc.eigenvalues) else None
            raise NoConvergence("eigenvalue iteration did not converge", last) from None
        lam = float(vals[0])
    if not lam > 0:
        raise NotPositiveDefinite(-1, f"operator is not positive definite (eigenvalue {lam})")
    return lam if which == "largest" else 1.0 / lam
