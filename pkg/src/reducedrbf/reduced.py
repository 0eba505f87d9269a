"""Least-squares reduced basis: greedy offline stage and N-independent online solve.

The reduced solution at ``mu`` is ``sum_j c_j xi_j`` with coefficients that
minimise the Euclidean residual of the augmented truth system.  Writing
``V_q = L_{N,q} @ basis`` and the forcing as ``sum_q b_q(mu) f_q``::

    K(mu) = sum_{r,s} a_r a_s M_{r,s},   M_{r,s} = V_r^T V_s
    h(mu) = sum_{r,q} a_r b_q G_{r,q},   G_{r,q} = V_r^T f_q

and ``K c = h`` are the normal equations.  The residual norm is evaluated
from the triangular factor of ``W = [f_1 .. f_Qf, V_1 xi_1 .. V_Qa xi_1,
V_1 xi_2, ...]``, which keeps it accurate down to round-off instead of the
square root of it.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .numerics import TOL, SparseLU, cho_factor, extreme_spd_eigen, NotPositiveDefinite
from .nodes import NodeSet
from .problems import Forcing, ParametricProblem
from .rbffd import truth_solve

log = logging.getLogger(__name__)


class DependentSnapshot(ValueError):
    """A snapshot adds no new direction to the reduced space."""


class DegenerateBasis(np.linalg.LinAlgError):
    """The reduced normal matrix is singular, indefinite or too badly conditioned."""


@dataclass(frozen=True)
class TrainingSet:
    parameters: np.ndarray
    mu_center: np.ndarray

    def __post_init__(self):
        if len(self.parameters) == 0:
            raise ValueError("training set is empty")

    @classmethod
    def grid(cls, problem: ParametricProblem, shape) -> "TrainingSet":
        return cls(problem.param_grid(shape), problem.mu_center)

    def __len__(self) -> int:
        return len(self.parameters)


# orthonormalization

def _mgs_step(x, y, basis, lbasis, passes=2):
    """Orthogonalize ``x`` (with ``y = L_c x``) against the columns of ``basis``."""
    for _ in range(passes):
        for j in range(basis.shape[1]):
            r = lbasis[:, j] @ y
            x = x - r * basis[:, j]
            y = y - r * lbasis[:, j]
    return x, y


def orthonormalize(snapshots, L_center) -> np.ndarray:
    """Modified Gram-Schmidt in the inner product ``(u, v) = (L_c u) . (L_c v)``.

    Each vector is orthogonalized twice.  A snapshot whose remaining norm
    drops below ``1e-12`` of its original norm raises :class:`DependentSnapshot`.
    """
    X = np.asarray(snapshots, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    basis = np.empty((X.shape[0], 0))
    lbasis = np.empty((X.shape[0], 0))
    for k in range(X.shape[1]):
        basis, lbasis = append_orthonormal(basis, lbasis, X[:, k], L_center)
    return basis


def append_orthonormal(basis, lbasis, snapshot, L_center):
    """Extend an orthonormal basis (and its image under ``L_c``) by one snapshot."""
    x = np.asarray(snapshot, dtype=float)
    y = L_center @ x
    norm0 = np.linalg.norm(y)
    if norm0 == 0:
        raise DependentSnapshot("snapshot has zero norm")
    x, y = _mgs_step(x, y, basis, lbasis)
    norm = np.linalg.norm(y)
    if norm < TOL.dependence * norm0:
        raise DependentSnapshot(f"orthogonalized norm {norm:.3e} below {TOL.dependence:g} of {norm0:.3e}")
    return np.column_stack([basis, x / norm]), np.column_stack([lbasis, y / norm])


# reduced operators

@dataclass
class ReducedOperators:
    M: np.ndarray  # (Qa, Qa, n, n)
    G: np.ndarray  # (Qa, Qf, n)
    F: np.ndarray  # (Qf, Qf) forcing Gram matrix
    residual_factor: np.ndarray  # triangular factor of W, (Qf + Qa n) square

    @property
    def n(self) -> int:
        return self.M.shape[-1]

    @property
    def q_a(self) -> int:
        return self.M.shape[0]

    @property
    def q_f(self) -> int:
        return self.F.shape[0]


def precompute(basis, bank, forcing_vectors) -> ReducedOperators:
    """Offline tables for N-independent normal equations and residual norms."""
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[1] == 0:
        raise ValueError("basis must be a nonempty N x n array")
    F = np.atleast_2d(np.asarray(forcing_vectors, dtype=float))
    V = np.stack([L @ basis for L in bank])  # (Qa, N, n)
    M = np.einsum("rki,skj->rsij", V, V)
    G = np.einsum("rki,qk->rqi", V, F)
    Fg = F @ F.T
    qa, N, n = V.shape
    cols = [F.T] + [V[:, :, j].T for j in range(n)]
    W = np.column_stack(cols)
    R = sla.qr(W, mode="r", check_finite=False)[0]
    m = W.shape[1]
    if R.shape[0] < m:
        R = np.vstack([R, np.zeros((m - R.shape[0], m))])
    return ReducedOperators(M, G, Fg, np.ascontiguousarray(R[:m, :m]))


def _theta(ops, a, b, c):
    n_use = c.shape[-1]
    return np.concatenate([b, -(c[:, None] * a[None, :]).ravel()]), ops.q_f + ops.q_a * n_use


def residual_norm(ops: ReducedOperators, a, b, c) -> float:
    """``||f(mu) - L_N(mu) sum_j c_j xi_j||`` from the offline tables.

    ``a`` and ``b`` are the operator and forcing coefficients at ``mu``;
    ``c`` may be shorter than the basis (leading basis vectors are used).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    theta, m = _theta(ops, a, b, c)
    return float(np.linalg.norm(ops.residual_factor[:m, :m] @ theta))


def residual_norm_expanded(ops: ReducedOperators, a, b, c) -> float:
    """Residual norm from the Gram expansion ``f.f - 2 c.h + c.K c``; clamps round-off at 0."""
    n_use = len(c)
    K = np.einsum("r,s,rsij->ij", a, a, ops.M[:, :, :n_use, :n_use])
    h = np.einsum("r,q,rqi->i", a, b, ops.G[:, :, :n_use])
    ff = b @ ops.F @ b
    r2 = ff - 2 * c @ h + c @ K @ c
    if r2 < -TOL.residual_clamp * max(ff, np.finfo(float).tiny):
        raise ArithmeticError(f"squared residual {r2:.3e} is negative beyond round-off")
    return float(np.sqrt(max(r2, 0.0)))


def reduced_system(ops: ReducedOperators, a, b, n_use: int | None = None):
    n_use = ops.n if n_use is None else n_use
    K = np.einsum("r,s,rsij->ij", a, a, ops.M[:, :, :n_use, :n_use])
    h = np.einsum("r,q,rqi->i", a, b, ops.G[:, :, :n_use])
    return K, h


def solve_reduced(K, h) -> np.ndarray:
    """Solve the SPD normal equations; raises :class:`DegenerateBasis`."""
    try:
        c = cho_factor(K)
    except NotPositiveDefinite as exc:
        raise DegenerateBasis(f"reduced matrix is not positive definite: {exc}") from None
    d = np.diag(c)
    if (d.max() / d.min()) ** 2 > TOL.k_condition:
        raise DegenerateBasis("reduced matrix condition number exceeds 1e14")
    return sla.cho_solve((c, True), h, check_finite=False)


def solve_reduced_many(ops: ReducedOperators, A, B, n_use: int | None = None):
    """Coefficients and residual norms for many parameters at once.

    ``A`` has shape ``(m, Qa)``, ``B`` shape ``(m, Qf)``.
    """
    n_use = ops.n if n_use is None else n_use
    K = np.einsum("pr,ps,rsij->pij", A, A, ops.M[:, :, :n_use, :n_use])
    H = np.einsum("pr,pq,rqi->pi", A, B, ops.G[:, :, :n_use])
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise DegenerateBasis("reduced matrix is not positive definite for some parameter") from None
    y = np.linalg.solve(L, H[..., None])
    C = np.linalg.solve(np.swapaxes(L, -1, -2), y)[..., 0]
    m = ops.q_f + ops.q_a * n_use
    theta = np.concatenate([B, -(C[:, :, None] * A[:, None, :]).reshape(len(A), -1)], axis=1)
    res = np.linalg.norm(theta @ ops.residual_factor[:m, :m].T, axis=1)
    return C, res


# stability constants

def beta_lb(L_mu, lu: SparseLU | None = None, rel_tol: float = TOL.eig_rel) -> float:
    """Smallest eigenvalue of ``L^T L`` (squared smallest singular value of ``L``)."""
    L_mu = sp.csc_matrix(L_mu)
    lu = lu or SparseLU(L_mu)
    n = L_mu.shape[0]
    return extreme_spd_eigen(lambda w: lu.solve(lu.solve(w, trans=True)), n, "smallest", rel_tol)


def alpha_ub_s(Phi, rel_tol: float = 1e-10) -> float:
    """``lambda_max(Phi^{-1})`` for the SPD global interpolation matrix ``Phi``."""
    Phi = np.asarray(Phi, dtype=float)
    c = cho_factor(Phi)
    return extreme_spd_eigen(lambda w: sla.cho_solve((c, True), w, check_finite=False),
                             Phi.shape[0], "largest", rel_tol)


def beta_lb_native(L_mu, Phi, lu: SparseLU | None = None, rel_tol: float = TOL.eig_rel) -> float:
    """Smallest eigenvalue of ``L^T Phi^{-1} L``."""
    L_mu = sp.csc_matrix(L_mu)
    lu = lu or SparseLU(L_mu)
    Phi = np.asarray(Phi)
    # (L^T Phi^-1 L)^-1 = L^-1 Phi L^-T
    return extreme_spd_eigen(lambda w: lu.solve(Phi @ lu.solve(w, trans=True)), L_mu.shape[0],
                             "smallest", rel_tol)


def native_norm(v, phi_factor) -> float:
    """``||S^{-1} v||`` with ``S`` the lower Cholesky factor of ``Phi``."""
    return float(np.linalg.norm(sla.solve_triangular(phi_factor, v, lower=True, check_finite=False)))


def beta_table(problem: ParametricProblem, bank, mus, rel_tol: float = TOL.eig_rel) -> np.ndarray:
    return np.array([beta_lb(problem.assemble(m, bank), rel_tol=rel_tol) for m in mus])


# the reduced model

@dataclass
class OnlineSolution:
    mu: np.ndarray
    coefficients: np.ndarray
    residual: float
    estimate: float
    values: np.ndarray | None = None


@dataclass
class ReducedModel:
    """Everything the online stage needs, plus the offline record."""

    problem: ParametricProblem
    selected_mus: np.ndarray
    snapshots: np.ndarray
    basis: np.ndarray
    ops: ReducedOperators
    forcing_vectors: np.ndarray
    training: np.ndarray
    beta: np.ndarray
    alpha: float
    history: list = field(default_factory=list)
    max_delta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    config: dict = field(default_factory=dict)
    nodes: NodeSet | None = None

    @property
    def n(self) -> int:
        return self.basis.shape[1]

    def coefficients(self, mu):
        a = self.problem.coefficients(mu)
        b = np.ones(self.ops.q_f) if self.ops.q_f == 1 else None
        if b is None:
            raise ValueError("multi-term forcing needs explicit forcing coefficients")
        return a, b

    @cached_property
    def _param_span(self) -> np.ndarray:
        span = np.array([hi - lo for lo, hi in self.problem.param_bounds], dtype=float)
        span[span == 0] = 1.0
        return span

    @cached_property
    def _beta_tree(self) -> cKDTree:
        # the lookup must not scale with |Xi| online
        return cKDTree(self.training / self._param_span)

    def beta_at(self, mu) -> float:
        """Stability constant at the nearest training parameter (scaled to the parameter box)."""
        _, k = self._beta_tree.query(np.asarray(mu, dtype=float) / self._param_span)
        return float(self.beta[int(k)])

    def estimate(self, mu, residual: float, beta: float | None = None) -> float:
        beta = self.beta_at(mu) if beta is None else beta
        if not beta > 0:
            raise ArithmeticError(f"stability constant {beta} is not positive")
        return float(np.sqrt(self.alpha) * residual / np.sqrt(beta))

    def online_solve(self, mu, n_use: int | None = None, reconstruct: bool = False) -> OnlineSolution:
        mu = self.problem.check_mu(mu)
        n_use = self.n if n_use is None else n_use
        if not 1 <= n_use <= self.n:
            raise ValueError(f"n_use must lie in [1, {self.n}]")
        a, b = self.coefficients(mu)
        K, h = reduced_system(self.ops, a, b, n_use)
        c = solve_reduced(K, h)
        r = residual_norm(self.ops, a, b, c)
        vals = self.basis[:, :n_use] @ c if reconstruct else None
        return OnlineSolution(mu, c, r, self.estimate(mu, r), vals)


def online_solve(model: ReducedModel, mu, n_use: int | None = None) -> OnlineSolution:
    return model.online_solve(mu, n_use)


def error_estimate(model: ReducedModel, mu, c, variant: int = 2, *, bank=None, phi=None,
                   phi_factor=None) -> float:
    """Residual-based bound on the native-space error of the reduced solution.

    Variant 2 uses only offline tables.  Variant 1 needs the full operator
    bank and the global interpolation matrix (``phi``) and costs O(N) work
    or more; it is meant for diagnostics.
    """
    problem = model.problem
    mu = np.asarray(mu, dtype=float)
    a, b = model.coefficients(mu)
    c = np.asarray(c, dtype=float)
    if variant == 2:
        return model.estimate(mu, residual_norm(model.ops, a, b, c))
    if variant != 1:
        raise ValueError("variant must be 1 or 2")
    if bank is None or phi is None:
        raise ValueError("variant 1 needs the operator bank and the interpolation matrix")
    L = problem.assemble(mu, bank)
    f = b @ model.forcing_vectors
    r = f - L @ (model.basis[:, : len(c)] @ c)
    phi_factor = cho_factor(phi) if phi_factor is None else phi_factor
    beta_s = beta_lb_native(L, phi)
    if not beta_s > 0:
        raise ArithmeticError("native stability constant is not positive")
    return float(np.sqrt(model.alpha) * native_norm(r, phi_factor) / np.sqrt(beta_s))


def greedy_offline(
    problem: ParametricProblem,
    bank,
    forcing: Forcing,
    training: TrainingSet,
    phi,
    n_max: int,
    tol: float = 0.0,
    seed: int = 0,
    first: int | None = 0,
    beta: np.ndarray | None = None,
    n_interior: int | None = None,
    config: dict | None = None,
    nodes: NodeSet | None = None,
) -> ReducedModel:
    """Greedy snapshot selection driven by the residual-based error estimate.

    Parameters
    ----------
    bank, forcing
        Affine operator matrices and forcing of the truth discretization.
    phi
        Global interpolation matrix on the nodes, used for the native-norm
        factor ``alpha``.
    first
        Index into the training set of the first parameter; ``None`` draws
        it at random from ``seed``.
    beta
        Stability constants on the training set; computed when omitted.
    nodes
        Stored with the model so it can be saved and reloaded on its own.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if forcing.q != 1:
        raise ValueError("the reduced model supports a parameter-independent forcing only")
    xi = np.asarray(training.parameters, dtype=float)
    N = bank[0].shape[0]
    n_interior = N if n_interior is None else n_interior
    t0 = time.perf_counter()
    if beta is None:
        beta = beta_table(problem, bank, xi)
    t_beta = time.perf_counter() - t0
    alpha = alpha_ub_s(phi)
    L_c = problem.assemble(training.mu_center, bank)
    A = problem.coefficients_many(xi)
    B = np.ones((len(xi), 1))

    rng = np.random.default_rng(seed)
    k = int(rng.integers(len(xi))) if first is None else int(first)
    available = np.ones(len(xi), dtype=bool)
    basis = np.empty((N, 0))
    lbasis = np.empty((N, 0))
    snaps, chosen, history, max_delta = [], [], [], []
    delta_prev = None
    t1 = time.perf_counter()
    while True:
        available[k] = False
        mu = xi[k]
        u = truth_solve(problem.truth_system(mu, bank, forcing, n_interior)).values
        try:
            basis, lbasis = append_orthonormal(basis, lbasis, u, L_c)
        except DependentSnapshot as exc:
            log.info("skipping mu=%s: %s", mu, exc)
        else:
            snaps.append(u)
            chosen.append(mu)
            history.append({"n": basis.shape[1], "mu": mu.tolist(), "max_delta_before": delta_prev})
            gram = lbasis.T @ lbasis
            if np.abs(gram - np.eye(len(gram))).max() > 1e-10:
                basis = orthonormalize(np.column_stack(snaps), L_c)
                lbasis = L_c @ basis
        ops = precompute(basis, bank, forcing.vectors)
        if basis.shape[1]:
            _, res = solve_reduced_many(ops, A, B)
            delta = np.sqrt(alpha) * res / np.sqrt(beta)
            if len(max_delta) < basis.shape[1]:
                max_delta.append(float(delta.max()))
        else:
            delta = np.full(len(xi), np.inf)
        log.info("n=%d max delta=%.3e", basis.shape[1], delta.max())
        if basis.shape[1] >= n_max or delta.max() <= tol or not available.any():
            break
        cand = np.where(available, delta, -np.inf)
        k = int(np.argmax(cand))
        delta_prev = float(delta[k])
    cfg = dict(config or {})
    cfg.update({"t_beta": t_beta, "t_offline": time.perf_counter() - t1, "seed": seed})
    return ReducedModel(problem, np.array(chosen), np.column_stack(snaps), basis, ops,
                        forcing.vectors.copy(), xi, np.asarray(beta, dtype=float), alpha,
                        history, np.array(max_delta), cfg, nodes)
