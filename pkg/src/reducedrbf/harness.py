"""Experiment drivers: truth convergence, reduced-basis convergence, timing and bound checks.

Every driver takes an :class:`ExperimentConfig`, returns plain records, and
when ``cfg.out_dir`` is set writes CSV files whose first line echoes the
configuration as JSON (``# config {...}``).
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import reduced as R
from .geometry import DOMAINS, get_domain
from .kernels import Family, Kernel
from .nodes import NodeSet, select_nodes
from .numerics import SparseLU, cho_factor
from .problems import MANUFACTURED, PROBLEMS, get_case, get_problem
from .rbffd import Discretization, TruthSystem, truth_solve

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """An experiment configuration is incomplete or refers to unknown names."""


class BoundViolation(AssertionError):
    """An error estimate fell below the true error."""


@dataclass
class ExperimentConfig:
    problem: str = "awave2d"
    domain: str | None = None
    kernel: str = "imq"
    eps: float | None = None
    n_nodes: int | None = None
    boundary_fraction: float = 0.15
    n_boundary_nodes: int | None = None
    candidate_factor: float = 3.0
    n_loc: int | None = None
    selection: str = "independent"
    xi_grid: tuple = (33, 33)
    test_grid: tuple = (20, 20)
    validation_grid: tuple = (50, 50)
    n_max: int = 20
    tol: float = 0.0
    seed: int = 0
    case: str = "test1"
    out_dir: str | None = None

    def __post_init__(self):
        self.xi_grid = tuple(int(v) for v in self.xi_grid)
        self.test_grid = tuple(int(v) for v in self.test_grid)
        self.validation_grid = tuple(int(v) for v in self.validation_grid)

    def validate(self) -> "ExperimentConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        prob = PROBLEMS[self.problem]
        if self.domain is None:
            self.domain = prob.domain
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}; choose from {sorted(DOMAINS)}")
        if get_domain(self.domain).dim != prob.dim:
            raise ConfigError(f"{self.problem} is {prob.dim}D but domain {self.domain} is not")
        if self.eps is None:
            self.eps = 3.0 if prob.dim == 2 else 0.75
        if self.n_nodes is None:
            self.n_nodes = 1000 if prob.dim == 2 else 2046
        try:
            Kernel(self.kernel, self.eps)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.n_loc is None:
            self.n_loc = 50 if prob.dim == 2 else 125
        if not 0 < self.boundary_fraction < 1:
            raise ConfigError("boundary_fraction must lie in (0, 1)")
        if self.candidate_factor < 1:
            raise ConfigError("candidate_factor must be at least 1")
        if self.n_boundary_nodes is not None and not 1 <= self.n_boundary_nodes < self.n_nodes:
            raise ConfigError("n_boundary_nodes must lie in [1, n_nodes)")
        if self.n_nodes < 2 or not 1 <= self.n_loc <= self.n_nodes:
            raise ConfigError("need n_nodes >= 2 and 1 <= n_loc <= n_nodes")
        for name in ("xi_grid", "test_grid", "validation_grid"):
            g = getattr(self, name)
            if len(g) != len(prob.param_bounds) or min(g) < 1:
                raise ConfigError(f"{name} must have {len(prob.param_bounds)} positive sizes, got {g}")
        if self.n_max < 1:
            raise ConfigError("n_max must be at least 1")
        if self.selection not in ("conditioned", "independent"):
            raise ConfigError("selection must be 'conditioned' or 'independent'")
        key = self.case if self.case in MANUFACTURED else f"{self.case}_{prob.dim}d"
        if key not in MANUFACTURED:
            raise ConfigError(f"unknown manufactured case {self.case!r}")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k in ("xi_grid", "test_grid", "validation_grid"):
            d[k] = list(d[k])
        return d

    @property
    def n_boundary(self) -> int:
        if self.n_boundary_nodes is not None:
            return int(self.n_boundary_nodes)
        return int(round(self.boundary_fraction * self.n_nodes))

    @property
    def n_interior(self) -> int:
        return self.n_nodes - self.n_boundary

    def kernel_obj(self) -> Kernel:
        return Kernel(self.kernel, self.eps)


@dataclass(frozen=True)
class ConvergenceRecord:
    sweep: str
    value: int
    error: float
    wall_time: float


@dataclass
class TruthSetup:
    nodes: NodeSet
    disc: Discretization
    bank: list


@lru_cache(maxsize=8)
def _cached_nodes(domain, kernel, eps, n_interior, n_boundary, factor, mode) -> NodeSet:
    dom = get_domain(domain)
    cand = dom.generate_candidates(int(math.ceil(factor * n_interior)), int(math.ceil(factor * n_boundary)))
    return select_nodes(cand, Kernel(kernel, eps), n_interior, n_boundary, mode=mode)


def make_nodes(cfg: ExperimentConfig) -> NodeSet:
    """Candidate generation plus power-function selection; memoised per configuration."""
    cfg.validate()
    return _cached_nodes(cfg.domain, Family(cfg.kernel).value, float(cfg.eps), cfg.n_interior,
                         cfg.n_boundary, float(cfg.candidate_factor), cfg.selection)


def truth_setup(cfg: ExperimentConfig, nodes: NodeSet | None = None) -> TruthSetup:
    cfg.validate()
    nodes = make_nodes(cfg) if nodes is None else nodes
    disc = Discretization(nodes, cfg.kernel_obj(), cfg.n_loc)
    bank = get_problem(cfg.problem).operator_bank(disc)
    return TruthSetup(nodes, disc, bank)


def rms(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.mean(v * v)))


def manufactured_error(cfg: ExperimentConfig, setup: TruthSetup, mus) -> float:
    """Worst root-mean-square nodal error against the exact solution over ``mus``."""
    prob = get_problem(cfg.problem)
    case = get_case(cfg.case, prob.dim)
    forcing = prob.manufactured_forcing(case, setup.nodes)
    exact = case.u(setup.nodes.points)
    worst = 0.0
    for mu in mus:
        u = truth_solve(prob.truth_system(mu, setup.bank, forcing, setup.nodes.n_interior)).values
        worst = max(worst, rms(u - exact))
    return worst


class SweepError(RuntimeError):
    def __init__(self, sweep, value, cause):
        self.sweep, self.value = sweep, value
        super().__init__(f"{sweep}={value}: {cause}")


def run_truth_convergence(cfg: ExperimentConfig, sweep: str, values, case: str | None = None,
                          grid: tuple | None = None) -> list[ConvergenceRecord]:
    """Worst-case manufactured-solution error as ``N`` or ``n_loc`` grows."""
    cfg = cfg.replace(case=case or cfg.case).validate()
    if sweep not in ("N", "n_loc"):
        raise ConfigError("sweep must be 'N' or 'n_loc'")
    values = [int(v) for v in values]
    if not values or any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep values must be strictly ascending")
    prob = get_problem(cfg.problem)
    mus = prob.param_grid(grid or cfg.validation_grid)
    out = []
    for v in values:
        c = cfg.replace(n_nodes=v) if sweep == "N" else cfg.replace(n_loc=v)
        t0 = time.perf_counter()
        try:
            c.validate()
            err = manufactured_error(c, truth_setup(c), mus)
        except ConfigError:
            raise
        except Exception as exc:
            raise SweepError(sweep, v, exc) from exc
        out.append(ConvergenceRecord(sweep, v, err, time.perf_counter() - t0))
        log.info("%s=%d error=%.3e", sweep, v, err)
    if cfg.out_dir:
        write_csv(Path(cfg.out_dir) / f"truth_convergence_{sweep}.csv", cfg,
                  ["sweep", "value", "error", "wall_time"],
                  [[r.sweep, r.value, r.error, r.wall_time] for r in out])
    return out


def build_model(cfg: ExperimentConfig, setup: TruthSetup | None = None) -> R.ReducedModel:
    cfg.validate()
    setup = setup or truth_setup(cfg)
    prob = get_problem(cfg.problem)
    training = R.TrainingSet.grid(prob, cfg.xi_grid)
    phi = cfg.kernel_obj().gram(setup.nodes.points)
    return R.greedy_offline(prob, setup.bank, prob.rb_forcing(setup.nodes), training, phi,
                            n_max=cfg.n_max, tol=cfg.tol, seed=cfg.seed, n_interior=setup.nodes.n_interior,
                            config=cfg.to_dict(), nodes=setup.nodes)


def true_error_curve(model: R.ReducedModel, setup: TruthSetup, mus) -> np.ndarray:
    """``max_mu rms(u^N - u^(n))`` for ``n = 1 .. model.n``."""
    prob = model.problem
    forcing = prob.rb_forcing(setup.nodes)
    worst = np.zeros(model.n)
    for mu in mus:
        u = truth_solve(prob.truth_system(mu, setup.bank, forcing, setup.nodes.n_interior)).values
        for n in range(1, model.n + 1):
            v = model.online_solve(mu, n, reconstruct=True).values
            worst[n - 1] = max(worst[n - 1], rms(u - v))
    return worst


@dataclass
class RBConvergence:
    model: R.ReducedModel
    true_error: np.ndarray
    test_mus: np.ndarray
    setup: TruthSetup = field(repr=False)


def run_rb_convergence(cfg: ExperimentConfig, setup: TruthSetup | None = None) -> RBConvergence:
    cfg.validate()
    setup = setup or truth_setup(cfg)
    model = build_model(cfg, setup)
    prob = get_problem(cfg.problem)
    test = prob.param_grid(cfg.test_grid)
    curve = true_error_curve(model, setup, test)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        rows = [[n, model.max_delta[n - 1] if n <= len(model.max_delta) else "", curve[n - 1]]
                for n in range(1, model.n + 1)]
        write_csv(out / "rb_convergence.csv", cfg, ["n", "max_delta", "max_true_error"], rows)
        write_csv(out / "selected_mu.csv", cfg, ["n"] + [f"mu{i + 1}" for i in range(len(prob.param_bounds))],
                  [[i + 1, *m] for i, m in enumerate(model.selected_mus)])
    return RBConvergence(model, curve, test, setup)


@dataclass
class TimingTable:
    n_use: int
    n_nodes: int
    t_offline: float
    t_truth_mean: float
    t_truth_median: float
    t_online_mean: float
    t_online_median: float
    t_solve_mean: float
    t_solve_median: float

    @property
    def speedup(self) -> float:
        return self.t_truth_mean / self.t_online_mean

    @property
    def speedup_solve(self) -> float:
        return self.t_truth_mean / self.t_solve_mean

    def row(self) -> dict:
        d = dataclasses.asdict(self)
        d.update(speedup=self.speedup, speedup_solve=self.speedup_solve)
        return d


def run_timing(cfg: ExperimentConfig, n_use: int = 12, model: R.ReducedModel | None = None,
               setup: TruthSetup | None = None, n_truth: int = 30, n_online: int = 1000) -> TimingTable:
    """Mean and median wall times of truth solves and online solves at random parameters.

    ``t_truth`` covers affine assembly of the truth matrix plus the sparse
    direct solve.  ``t_online`` covers coefficient evaluation, assembly and
    solution of the reduced normal equations and the residual estimate;
    ``t_solve`` is the reduced solve alone, with the reduced system prebuilt.
    """
    cfg.validate()
    setup = setup or truth_setup(cfg)
    model = model or build_model(cfg.replace(n_max=max(cfg.n_max, n_use)), setup)
    if model.n < n_use:
        raise ValueError(f"model has only {model.n} basis functions, need {n_use}")
    prob = model.problem
    rng = np.random.default_rng(cfg.seed)
    forcing = prob.rb_forcing(setup.nodes)
    clock = time.perf_counter
    tt = []
    for mu in prob.random_mus(n_truth, rng):
        t0 = clock()
        truth_solve(prob.truth_system(mu, setup.bank, forcing, setup.nodes.n_interior))
        tt.append(clock() - t0)
    mus = prob.random_mus(n_online, rng)
    to, ts = [], []
    for mu in mus:
        t0 = clock()
        model.online_solve(mu, n_use)
        to.append(clock() - t0)
    for mu in mus:
        a, b = model.coefficients(mu)
        K, h = R.reduced_system(model.ops, a, b, n_use)
        t0 = clock()
        R.solve_reduced(K, h)
        ts.append(clock() - t0)
    table = TimingTable(n_use, setup.nodes.n, float(model.config.get("t_beta", 0.0) + model.config.get("t_offline", 0.0)),
                        float(np.mean(tt)), float(np.median(tt)), float(np.mean(to)), float(np.median(to)),
                        float(np.mean(ts)), float(np.median(ts)))
    if cfg.out_dir:
        row = table.row()
        write_csv(Path(cfg.out_dir) / "timing.csv", cfg, list(row), [list(row.values())])
    return table


@dataclass
class BoundRecord:
    mu: np.ndarray
    n: int
    delta1: float
    delta2: float
    error: float


def run_bound_check(cfg: ExperimentConfig, n_samples: int = 50, setup: TruthSetup | None = None,
                    model: R.ReducedModel | None = None, slack: float = 1e-10,
                    raise_on_violation: bool = True) -> list[BoundRecord]:
    """Compare both error estimates with the native-space error at random parameters.

    The stability constant is computed at each sampled parameter, so
    ``delta2`` is the certified bound there rather than a table lookup.
    Every basis size ``n = 1 .. model.n`` is checked.
    """
    cfg.validate()
    if cfg.n_nodes > 400:
        raise ConfigError("the bound check factors the dense interpolation matrix; use n_nodes <= 400")
    if n_samples < 1:
        raise ConfigError("n_samples must be positive")
    setup = setup or truth_setup(cfg)
    model = model or build_model(cfg, setup)
    prob = model.problem
    phi = cfg.kernel_obj().gram(setup.nodes.points)
    S = cho_factor(phi)
    forcing = prob.rb_forcing(setup.nodes)
    rng = np.random.default_rng(cfg.seed + 1)
    # Ritz values approach lambda_max from below; shrink beta by the solver tolerance
    safety = 1.0 - 1e-6
    out = []
    for mu in prob.random_mus(n_samples, rng):
        L = prob.assemble(mu, setup.bank)
        lu = SparseLU(L)
        u = truth_solve(TruthSystem(L, forcing.at(mu), tuple(mu), setup.nodes.n_interior), lu).values
        beta = R.beta_lb(L, lu) * safety
        beta_s = R.beta_lb_native(L, phi, lu) * safety
        a, b = model.coefficients(mu)
        for n in range(1, model.n + 1):
            c = R.solve_reduced(*R.reduced_system(model.ops, a, b, n))
            v = model.basis[:, :n] @ c
            e = u - v
            err = R.native_norm(e, S)
            res = R.residual_norm(model.ops, a, b, c)
            d2 = float(np.sqrt(model.alpha) * res / np.sqrt(beta))
            r = forcing.at(mu) - L @ v
            d1 = float(np.sqrt(model.alpha) * R.native_norm(r, S) / np.sqrt(beta_s))
            out.append(BoundRecord(np.asarray(mu), n, d1, d2, err))
    if cfg.out_dir:
        write_csv(Path(cfg.out_dir) / "bound_check.csv", cfg,
                  [f"mu{i + 1}" for i in range(len(prob.param_bounds))]
                  + ["n", "delta1", "delta2", "error", "effectivity2"],
                  [[*r.mu, r.n, r.delta1, r.delta2, r.error, r.delta2 / r.error if r.error > 0 else ""]
                   for r in out])
    bad = [r for r in out if r.delta2 + slack < r.error]
    if bad and raise_on_violation:
        r = bad[0]
        raise BoundViolation(f"{len(bad)} violations; e.g. mu={tuple(r.mu)}, n={r.n}: "
                             f"delta2={r.delta2:.3e} < error={r.error:.3e}")
    return out


def write_csv(path, cfg: ExperimentConfig, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("# config " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_solution(path, points, values, header: str | None = None) -> None:
    dim = points.shape[1]
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["index"] + list("xyz"[:dim]) + ["u"])
        for i, (p, u) in enumerate(zip(points, values)):
            w.writerow([i] + [repr(float(v)) for v in p] + [repr(float(u))])
