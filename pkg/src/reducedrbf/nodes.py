"""Collocation node selection by the discrete power function, and kNN stencils."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CandidateSet
from .kernels import Kernel
from .numerics import TOL, PivotedCholesky, pivoted_cholesky_columns


class SelectionError(RuntimeError):
    """The candidate set cannot supply the requested number of independent centers."""


@dataclass(frozen=True)
class NodeSet:
    """Ordered centers, interior nodes first, then boundary nodes."""

    points: np.ndarray
    n_interior: int

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if not 0 <= self.n_interior <= len(pts):
            raise ValueError("n_interior out of range")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def n_boundary(self) -> int:
        return self.n - self.n_interior

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def interior(self) -> np.ndarray:
        return self.points[: self.n_interior]

    @property
    def boundary(self) -> np.ndarray:
        return self.points[self.n_interior:]

    def labels(self) -> list[str]:
        return ["interior"] * self.n_interior + ["boundary"] * self.n_boundary

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["index"] + list("xyz"[: self.dim]) + ["class"])
            for i, (p, c) in enumerate(zip(self.points, self.labels())):
                w.writerow([i] + [repr(float(v)) for v in p] + [c])

    @classmethod
    def from_csv(cls, path) -> "NodeSet":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        head, body = rows[0], rows[1:]
        coords = [c for c in head if c in ("x", "y", "z")]
        cols = [head.index(c) for c in coords]
        pts = np.array([[float(r[c]) for c in cols] for r in body])
        cls_col = head.index("class")
        labels = [r[cls_col] for r in body]
        n_int = labels.count("interior")
        if labels != ["interior"] * n_int + ["boundary"] * (len(labels) - n_int):
            raise ValueError(f"{path}: nodes must be ordered interior first, then boundary")
        return cls(pts, n_int)


def power_function_pivots(
    points: np.ndarray,
    kernel: Kernel,
    n_select: int,
    allowed: np.ndarray | None = None,
    prior: PivotedCholesky | None = None,
    strict: bool = True,
) -> PivotedCholesky:
    """Pivoted Cholesky of the candidate kernel matrix, formed one column at a time."""
    if not kernel.positive_definite:
        raise ValueError(f"power-function selection needs a positive-definite kernel, not {kernel.family.value}")
    points = np.asarray(points, dtype=float)
    M = len(points)
    phi0 = kernel.phi0

    def column(i):
        return kernel.gram(points, points[i : i + 1])[:, 0]

    res = pivoted_cholesky_columns(np.full(M, phi0), column, n_select,
                                   stop_tol=TOL.pivot_floor * phi0, allowed=allowed, prior=prior)
    taken = len(res.pivots) - (0 if prior is None else len(prior.pivots))
    if strict and taken < n_select:
        raise SelectionError(
            f"only {taken} of {n_select} centers are numerically independent "
            f"(power function fell below {TOL.pivot_floor:g} * phi(0))")
    return res


def power_function_select(candidates, kernel: Kernel, n_select: int) -> np.ndarray:
    """Indices of the first ``n_select`` power-function centers among ``candidates``.

    ``candidates`` is a point array (or a :class:`CandidateSet`, whose
    interior points come before its boundary points).
    """
    pts = candidates.points if isinstance(candidates, CandidateSet) else np.asarray(candidates, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if n_select > len(pts):
        raise ValueError("n_select exceeds the number of candidates")
    return power_function_pivots(pts, kernel, n_select).pivots


def select_nodes(candidates: CandidateSet, kernel: Kernel, n_interior: int, n_boundary: int,
                 mode: str = "independent") -> NodeSet:
    """Pick ``n_interior + n_boundary`` centers and order them interior first.

    ``mode="independent"`` runs two separate greedy selections, one over the
    interior and one over the boundary candidates.  ``mode="conditioned"``
    runs a single factorization over all candidates: boundary centers are
    taken first, and the interior greedy then measures the power function
    relative to them, so no interior center lands on top of a boundary one.
    """
    if n_interior > len(candidates.interior) or n_boundary > len(candidates.boundary):
        raise ValueError("requested more centers than candidates")
    if mode == "independent":
        ii = power_function_select(candidates.interior, kernel, n_interior)
        ib = power_function_select(candidates.boundary, kernel, n_boundary)
        pts = np.vstack([candidates.interior[ii], candidates.boundary[ib]])
    elif mode == "conditioned":
        allp = candidates.points
        ni = len(candidates.interior)
        is_b = np.arange(len(allp)) >= ni
        rb = power_function_pivots(allp, kernel, n_boundary, allowed=is_b)
        ri = power_function_pivots(allp, kernel, n_interior, allowed=~is_b, prior=rb)
        ib = rb.pivots
        ii = ri.pivots[n_boundary:]
        pts = np.vstack([allp[ii], allp[ib]])
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    return NodeSet(pts, n_interior)


def build_stencils(nodes, n_loc: int) -> np.ndarray:
    """Nearest-neighbor stencils, one row per node, master first.

    Row ``j`` lists the ``n_loc`` nodes closest to node ``j`` in Euclidean
    distance, sorted by distance with ties broken by lower index.
    """
    pts = nodes.points if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    N = len(pts)
    if not 1 <= n_loc <= N:
        raise ValueError("n_loc must lie in [1, N]")
    k = min(N, n_loc + 8)
    tree = cKDTree(pts)
    dist, idx = tree.query(pts, k=k)
    dist = np.atleast_2d(dist.reshape(N, k))
    idx = np.atleast_2d(idx.reshape(N, k))
    out = np.empty((N, n_loc), dtype=np.int64)
    for j in range(N):
        d, i = dist[j], idx[j]
        order = np.lexsort((i, d))
        d, i = d[order], i[order]
        if k < N and d[n_loc - 1] == d[-1]:
            # a tie reaches past the queried neighbors; resolve exhaustively
            dd = np.sqrt(((pts - pts[j]) ** 2).sum(axis=1))
            order = np.lexsort((np.arange(N), dd))
            i = order
        row = i[:n_loc]
        if row[0] != j:
            # another node at distance zero would make the stencil singular
            raise ValueError(f"node {j} coincides with node {row[0]}")
        out[j] = row
    return out
