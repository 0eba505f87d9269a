"""RBF-FD differentiation weights, sparse operators and the augmented truth system."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels as K
from .nodes import NodeSet, build_stencils
from .numerics import NotPositiveDefinite, Singular, SparseLU, cho_factor


class StencilError(np.linalg.LinAlgError):
    """The local interpolation matrix of a stencil could not be factored."""

    def __init__(self, master: int, cause: Exception | None = None):
        self.master = master
        super().__init__(f"local interpolation matrix of stencil {master} is not numerically "
                         f"positive definite ({cause})")


def local_weights(points, kernel: K.Kernel, deriv="", master: int = 0) -> np.ndarray:
    """Differentiation weights at ``points[0]`` from the stencil ``points``.

    ``deriv`` may be one derivative name or a sequence of names; in the
    latter case one weight row per name is returned (shape ``(len(deriv), n)``).
    The local interpolation matrix is factored once by Cholesky and the
    weight rows follow from triangular solves.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    single = isinstance(deriv, str)
    derivs = [deriv] if single else list(deriv)
    phi = kernel.gram(pts)
    try:
        c = cho_factor(phi)
    except NotPositiveDefinite as exc:
        raise StencilError(master, exc) from None
    rhs = np.column_stack([K.partial(kernel, pts, pts[0], d) for d in derivs])
    w = sla.cho_solve((c, True), rhs, check_finite=False).T
    return w[0] if single else w


@dataclass
class Discretization:
    """Nodes, stencils and kernel of an RBF-FD truth discretization.

    Differentiation matrices over all ``N`` rows are built on first use and
    cached per derivative name.
    """

    nodes: NodeSet
    kernel: K.Kernel
    n_loc: int
    stencils: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.stencils is None:
            self.stencils = build_stencils(self.nodes, self.n_loc)
        self.stencils = np.asarray(self.stencils, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.nodes.n

    def diff(self, deriv: str) -> sp.csr_matrix:
        if deriv not in self._cache:
            self.precompute([deriv])
        return self._cache[deriv]

    def precompute(self, derivs) -> None:
        derivs = [d for d in derivs if d not in self._cache]
        if not derivs:
            return
        mats = assemble_diff_matrices(self.nodes, self.stencils, self.kernel, derivs)
        self._cache.update(mats)


def assemble_diff_matrices(nodes, stencils, kernel: K.Kernel, derivs, rows: str = "all") -> dict:
    """Sparse differentiation matrices for several derivatives sharing one factorization per stencil."""
    pts = nodes.points if isinstance(nodes, NodeSet) else np.atleast_2d(np.asarray(nodes, dtype=float))
    stencils = np.asarray(stencils, dtype=np.int64)
    N = len(pts)
    if rows == "all":
        masters = np.arange(N)
    elif rows == "interior":
        masters = np.arange(nodes.n_interior)
    else:
        raise ValueError("rows must be 'all' or 'interior'")
    n_loc = stencils.shape[1]
    vals = {d: np.empty((len(masters), n_loc)) for d in derivs}
    for r, j in enumerate(masters):
        members = stencils[j]
        if members[0] != j:
            raise ValueError(f"stencil {j} does not start with its master")
        w = local_weights(pts[members], kernel, list(derivs), master=int(j))
        for d, row in zip(derivs, w):
            vals[d][r] = row
    indptr = np.arange(len(masters) + 1) * n_loc
    indices = stencils[masters].ravel()
    out = {}
    for d in derivs:
        m = sp.csr_matrix((vals[d].ravel(), indices.copy(), indptr.copy()), shape=(len(masters), N))
        m.has_sorted_indices = False
        m.sort_indices()
        out[d] = m
    return out


def assemble_diff_matrix(nodes, stencils, kernel: K.Kernel, deriv: str, rows: str = "all") -> sp.csr_matrix:
    """Sparse RBF-FD matrix for one derivative; row ``j`` holds the weights of stencil ``j``."""
    return assemble_diff_matrices(nodes, stencils, kernel, [deriv], rows)[deriv]


def global_diff_matrix(points, kernel: K.Kernel, deriv: str) -> np.ndarray:
    """Dense global RBF differentiation matrix ``Phi_deriv @ inv(Phi)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    phi = kernel.gram(pts)
    b = K.partial_matrix(kernel, pts, pts, deriv)
    # D = B Phi^{-1}  <=>  Phi D^T = B^T (Phi symmetric)
    return sla.solve(phi, b.T, assume_a="pos").T


@dataclass(frozen=True)
class TruthSystem:
    """Square augmented system: operator rows for interior nodes, identity rows for boundary nodes."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    mu: tuple
    n_interior: int


@dataclass(frozen=True)
class TruthSolution:
    values: np.ndarray
    mu: tuple
    residual: float


class TruthSolveError(RuntimeError):
    pass


def truth_solve(system: TruthSystem, lu: SparseLU | None = None) -> TruthSolution:
    """Sparse direct solve of an augmented truth system."""
    A = system.matrix
    if A.shape[0] != A.shape[1]:
        raise ValueError("truth system must be square")
    try:
        lu = lu or SparseLU(A)
    except Singular as exc:
        raise TruthSolveError(f"truth matrix is singular at mu={system.mu}: {exc}") from None
    u = lu.solve(system.rhs)
    res = float(np.linalg.norm(A @ u - system.rhs))
    anorm = spla.norm(A, ord=np.inf)
    scale = np.linalg.norm(system.rhs) + anorm * np.linalg.norm(u)
    if not np.all(np.isfinite(u)) or res > 1e-10 * max(scale, np.finfo(float).tiny):
        raise TruthSolveError(f"truth solve at mu={system.mu} is inaccurate (residual {res:.3e})")
    return TruthSolution(u, tuple(system.mu), res)
