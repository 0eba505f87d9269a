"""Parametric elliptic test problems in affine form.

Every operator is written as ``L(mu) = sum_q a_q(mu) L_q`` where each
``L_q`` is a short recipe of terms ``scale * field(x) * d^alpha``.  The
same recipe drives the discrete operators (through the RBF-FD
differentiation matrices) and the continuous operator used to manufacture
forcing terms, so the two cannot drift apart.

The first affine term always has coefficient 1 and carries the Dirichlet
identity rows of the augmented system; the remaining terms have zero rows
on the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .rbffd import Discretization, TruthSystem
from .nodes import NodeSet

_AXIS = {"x": 0, "y": 1, "z": 2}


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    """``scale * field * d^deriv``; ``field`` names a coordinate or is ``None`` (constant 1)."""

    deriv: str
    scale: float = 1.0
    field: str | None = None

    def weight(self, points: np.ndarray) -> np.ndarray:
        w = np.full(len(points), self.scale)
        if self.field is not None:
            w = w * points[:, _AXIS[self.field]]
        return w


@dataclass(frozen=True)
class AffineTerm:
    coef: Callable[[np.ndarray], float]
    recipe: tuple[Term, ...]
    label: str = ""


@dataclass(frozen=True)
class Forcing:
    """Affine right-hand side ``sum_q b_q(mu) f_q`` sampled on the nodes (interior then boundary)."""

    coefs: Callable[[np.ndarray], np.ndarray]
    vectors: np.ndarray  # shape (Q_f, N)

    def at(self, mu) -> np.ndarray:
        return np.asarray(self.coefs(np.asarray(mu, dtype=float))) @ self.vectors

    @property
    def q(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution with its pure second derivatives."""

    name: str
    dim: int
    u: Callable[[np.ndarray], np.ndarray]
    second: Callable[[np.ndarray, int], np.ndarray]

    def derivative(self, x, deriv: str) -> np.ndarray:
        x = np.atleast_2d(x)
        if deriv == "":
            return self.u(x)
        if len(deriv) == 2 and deriv[0] == deriv[1]:
            return self.second(x, _AXIS[deriv[0]])
        raise ValueError(f"manufactured cases provide only pure second derivatives, not {deriv!r}")


@dataclass(frozen=True)
class ParametricProblem:
    name: str
    dim: int
    domain: str
    param_bounds: tuple[tuple[float, float], tuple[float, float]]
    operator_terms: tuple[AffineTerm, ...]
    rb_forcing_field: Callable[[np.ndarray], np.ndarray]
    boundary_field: Callable[[np.ndarray], np.ndarray] = lambda x: np.zeros(len(x))

    @property
    def q_a(self) -> int:
        return len(self.operator_terms)

    @property
    def mu_center(self) -> np.ndarray:
        return np.array([(lo + hi) / 2 for lo, hi in self.param_bounds])

    @property
    def derivs(self) -> list[str]:
        return sorted({t.deriv for a in self.operator_terms for t in a.recipe if t.deriv})

    def check_mu(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape != (len(self.param_bounds),):
            raise ParameterError(f"{self.name} takes {len(self.param_bounds)} parameters, got {mu.size}")
        for v, (lo, hi) in zip(mu, self.param_bounds):
            slack = 1e-12 * max(1.0, abs(lo), abs(hi))
            if not lo - slack <= v <= hi + slack:
                raise ParameterError(f"mu={tuple(float(v) for v in mu)} lies outside {self.param_bounds}")
        return mu

    def coefficients(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        return np.array([a.coef(mu) for a in self.operator_terms], dtype=float)

    def coefficients_many(self, mus) -> np.ndarray:
        """Coefficient table of shape ``(len(mus), Q_a)``."""
        return np.array([self.coefficients(m) for m in np.atleast_2d(mus)])

    def param_grid(self, shape: Sequence[int]) -> np.ndarray:
        """Equi-spaced tensor grid over the parameter box, endpoints included."""
        axes = [np.linspace(lo, hi, n) if n > 1 else np.array([(lo + hi) / 2])
                for (lo, hi), n in zip(self.param_bounds, shape)]
        m = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in m], axis=-1)

    def random_mus(self, count: int, rng) -> np.ndarray:
        lo = np.array([b[0] for b in self.param_bounds])
        hi = np.array([b[1] for b in self.param_bounds])
        return lo + (hi - lo) * rng.random((count, len(lo)))

    # discrete operators

    def operator_bank(self, disc: Discretization) -> list[sp.csr_matrix]:
        """The ``N x N`` matrices ``L_{N,q}`` of the augmented system."""
        disc.precompute(self.derivs)
        nodes = disc.nodes
        ni, N = nodes.n_interior, nodes.n
        interior = nodes.interior
        bank = []
        for q, a in enumerate(self.operator_terms):
            block = sp.csr_matrix((ni, N))
            for t in a.recipe:
                if t.deriv:
                    D = disc.diff(t.deriv)[:ni]
                else:
                    D = sp.eye(ni, N, format="csr")
                block = block + sp.diags(t.weight(interior)) @ D
            lower = sp.eye(N - ni, N, k=ni, format="csr") if q == 0 else sp.csr_matrix((N - ni, N))
            bank.append(sp.vstack([block, lower], format="csr"))
        return bank

    def assemble(self, mu, bank: Sequence[sp.spmatrix]) -> sp.csr_matrix:
        """``sum_q a_q(mu) L_{N,q}``."""
        mu = self.check_mu(mu)
        coefs = self.coefficients(mu)
        out = coefs[0] * bank[0]
        for c, L in zip(coefs[1:], bank[1:]):
            out = out + c * L
        return sp.csr_matrix(out)

    def truth_system(self, mu, bank, forcing: Forcing, n_interior: int) -> TruthSystem:
        mu = self.check_mu(mu)
        return TruthSystem(self.assemble(mu, bank), forcing.at(mu), tuple(mu), n_interior)

    # continuous operator and forcing

    def apply_continuous(self, mu, x, derivative: Callable[[np.ndarray, str], np.ndarray]) -> np.ndarray:
        """``L(mu) u`` at points ``x`` given ``derivative(x, name)`` of ``u``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        coefs = self.coefficients(mu)
        out = np.zeros(len(x))
        for c, a in zip(coefs, self.operator_terms):
            for t in a.recipe:
                out += c * t.weight(x) * derivative(x, t.deriv)
        return out

    def rb_forcing(self, nodes: NodeSet) -> Forcing:
        """The fixed reduced-basis forcing with homogeneous Dirichlet data (``Q_f = 1``)."""
        vec = np.concatenate([self.rb_forcing_field(nodes.interior), self.boundary_field(nodes.boundary)])
        return Forcing(lambda mu: np.ones(1), vec[None, :])

    def manufactured_forcing(self, case: ManufacturedCase, nodes: NodeSet) -> Forcing:
        """Forcing and boundary data reproducing ``case``; affine with ``Q_f = Q_a``."""
        if case.dim != self.dim:
            raise ValueError(f"{case.name} is {case.dim}D, {self.name} is {self.dim}D")
        rows = []
        for q, a in enumerate(self.operator_terms):
            vals = np.zeros(nodes.n_interior)
            for t in a.recipe:
                vals += t.weight(nodes.interior) * case.derivative(nodes.interior, t.deriv)
            bnd = case.u(nodes.boundary) if q == 0 else np.zeros(nodes.n_boundary)
            rows.append(np.concatenate([vals, bnd]))
        return Forcing(self.coefficients, np.array(rows))


def manufactured_rhs(case: ManufacturedCase, problem: ParametricProblem, mu, x) -> np.ndarray:
    """``L(mu) u`` for the exact solution of ``case`` at the points ``x``."""
    return problem.apply_continuous(mu, x, case.derivative)


# catalog

def _one(mu):
    return 1.0


def _mu1(mu):
    return float(mu[0])


def _mu2(mu):
    return float(mu[1])


def _problems() -> dict[str, ParametricProblem]:
    helm = ((0.1, 4.0), (0.0, 2.0))
    diff = ((-0.99, 0.99), (-0.99, 0.99))
    return {
        "awave2d": ParametricProblem(
            "awave2d", 2, "flower2d", helm,
            (AffineTerm(_one, (Term("xx", -1.0),), "-Dxx"),
             AffineTerm(_mu1, (Term("yy", -1.0),), "-Dyy"),
             AffineTerm(_mu2, (Term("", -1.0),), "-I")),
            lambda x: -10.0 * np.sin(8.0 * x[:, 0] * (x[:, 1] - 1.0)),
        ),
        "diff2d": ParametricProblem(
            "diff2d", 2, "flower2d", diff,
            (AffineTerm(_one, (Term("xx"), Term("yy")), "Dxx+Dyy"),
             AffineTerm(_mu1, (Term("xx", 1.0, "x"),), "diag(x)Dxx"),
             AffineTerm(_mu2, (Term("yy", 1.0, "y"),), "diag(y)Dyy")),
            lambda x: np.exp(4.0 * x[:, 0] * x[:, 1]),
        ),
        "awave3d": ParametricProblem(
            "awave3d", 3, "blob3d", helm,
            (AffineTerm(_one, (Term("xx", -1.0), Term("zz", -1.0)), "-Dxx-Dzz"),
             AffineTerm(_mu1, (Term("yy", -1.0),), "-Dyy"),
             AffineTerm(_mu2, (Term("", -1.0),), "-I")),
            lambda x: -10.0 * np.sin(8.0 * x[:, 0] * (x[:, 1] - 1.0) * x[:, 2]),
        ),
        "diff3d": ParametricProblem(
            "diff3d", 3, "blob3d", diff,
            (AffineTerm(_one, (Term("xx"), Term("yy"), Term("zz", 1.0, "z")), "Dxx+Dyy+diag(z)Dzz"),
             AffineTerm(_mu1, (Term("xx", 1.0, "x"),), "diag(x)Dxx"),
             AffineTerm(_mu2, (Term("yy", 1.0, "y"),), "diag(y)Dyy")),
            lambda x: np.exp(4.0 * x[:, 0] * x[:, 1] * x[:, 2]),
        ),
    }


PROBLEMS = _problems()


def problem_catalog() -> dict[str, ParametricProblem]:
    return dict(PROBLEMS)


def get_problem(name: str) -> ParametricProblem:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def _sines(x):
    return np.prod(np.sin(np.pi * x), axis=1)


def _bump(x):
    return np.exp(-20.0 * (x**2).sum(axis=1))


def _test2_u(x):
    u = _bump(x) - x[:, 0] ** 2 + x[:, 1] ** 3
    if x.shape[1] == 3:
        u = u - x[:, 2] ** 2
    return u


def _test2_second(x, axis):
    e = _bump(x)
    base = e * (-40.0 + 1600.0 * x[:, axis] ** 2)
    if axis == 1:
        return base + 6.0 * x[:, 1]
    return base - 2.0


MANUFACTURED = {
    "test1_2d": ManufacturedCase("test1_2d", 2, _sines, lambda x, i: -np.pi**2 * _sines(x)),
    "test2_2d": ManufacturedCase("test2_2d", 2, _test2_u, _test2_second),
    "test1_3d": ManufacturedCase("test1_3d", 3, _sines, lambda x, i: -np.pi**2 * _sines(x)),
    "test2_3d": ManufacturedCase("test2_3d", 3, _test2_u, _test2_second),
    "zero_2d": ManufacturedCase("zero_2d", 2, lambda x: np.zeros(len(x)), lambda x, i: np.zeros(len(x))),
    "zero_3d": ManufacturedCase("zero_3d", 3, lambda x: np.zeros(len(x)), lambda x, i: np.zeros(len(x))),
}


def get_case(name: str, dim: int | None = None) -> ManufacturedCase:
    """Look up a manufactured case by name; ``"test1"`` with ``dim=2`` means ``"test1_2d"``."""
    key = name if name in MANUFACTURED or dim is None else f"{name}_{dim}d"
    try:
        return MANUFACTURED[key]
    except KeyError:
        raise KeyError(f"unknown manufactured case {name!r}; choose from {sorted(MANUFACTURED)}") from None
