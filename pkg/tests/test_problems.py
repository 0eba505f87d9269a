import numpy as np
import pytest

from reducedrbf.geometry import get_domain
from reducedrbf.kernels import Kernel
from reducedrbf.nodes import select_nodes
from reducedrbf.problems import (MANUFACTURED, ParameterError, get_case, get_problem, manufactured_rhs,
                                 problem_catalog)
from reducedrbf.rbffd import Discretization


@pytest.fixture(scope="module")
def disc2d():
    cand = get_domain("flower2d").generate_candidates(400, 60)
    nodes = select_nodes(cand, Kernel("imq", 3.0), 150, 25)
    return Discretization(nodes, Kernel("imq", 3.0), 20)


def fd_second(f, x, axis, h=1e-4):
    e = np.zeros(x.shape[1])
    e[axis] = h
    return (f(x + e) - 2 * f(x) + f(x - e)) / h**2


@pytest.mark.parametrize("name", sorted(MANUFACTURED))
def test_manufactured_second_derivatives(name):
    case = MANUFACTURED[name]
    x = np.random.default_rng(0).uniform(-0.8, 0.8, (20, case.dim))
    for axis, d in enumerate("xyz"[: case.dim]):
        assert np.allclose(case.derivative(x, d + d), fd_second(case.u, x, axis), rtol=1e-5, atol=1e-5)


def test_catalog_and_lookup():
    assert sorted(problem_catalog()) == ["awave2d", "awave3d", "diff2d", "diff3d"]
    assert get_case("test1", 3).name == "test1_3d"
    with pytest.raises(KeyError):
        get_problem("heat")
    for p in problem_catalog().values():
        assert p.q_a == 3
        assert p.coefficients(p.mu_center)[0] == 1.0


def test_parameter_bounds():
    p = get_problem("awave2d")
    p.check_mu([0.1, 2.0])
    with pytest.raises(ParameterError):
        p.check_mu([0.05, 1.0])
    with pytest.raises(ParameterError):
        p.check_mu([1.0])
    g = p.param_grid((3, 4))
    assert g.shape == (12, 2)
    assert g[0].tolist() == [0.1, 0.0] and g[-1].tolist() == [4.0, 2.0]
    r = p.random_mus(100, np.random.default_rng(0))
    for mu in r:
        p.check_mu(mu)


@pytest.mark.parametrize("name", ["awave2d", "diff2d"])
def test_bank_structure_and_assembly(disc2d, name):
    p = get_problem(name)
    bank = p.operator_bank(disc2d)
    ni, N = disc2d.nodes.n_interior, disc2d.nodes.n
    assert all(L.shape == (N, N) for L in bank)
    B0 = bank[0][ni:].toarray()
    assert np.array_equal(B0, np.eye(N)[ni:])
    for L in bank[1:]:
        assert L[ni:].nnz == 0
    mu = np.array([0.5, 0.3])
    a = p.coefficients(mu)
    direct = sum(c * L for c, L in zip(a, bank))
    assert abs(p.assemble(mu, bank) - direct).max() < 1e-14


def test_awave_operator_terms(disc2d):
    p = get_problem("awave2d")
    bank = p.operator_bank(disc2d)
    ni = disc2d.nodes.n_interior
    mu = np.array([2.0, 1.5])
    A = p.assemble(mu, bank)[:ni]
    expected = -(disc2d.diff("xx") + 2.0 * disc2d.diff("yy"))[:ni] - 1.5 * np.eye(disc2d.n)[:ni]
    assert np.abs(A - expected).max() < 1e-12


def test_diff_variable_coefficients(disc2d):
    p = get_problem("diff2d")
    bank = p.operator_bank(disc2d)
    ni = disc2d.nodes.n_interior
    x = disc2d.nodes.interior
    expected = np.diag(x[:, 0]) @ disc2d.diff("xx")[:ni].toarray()
    assert np.abs(bank[1][:ni].toarray() - expected).max() < 1e-12


def test_manufactured_forcing_matches_continuous_operator(disc2d):
    p = get_problem("diff2d")
    case = get_case("test2", 2)
    forcing = p.manufactured_forcing(case, disc2d.nodes)
    mu = np.array([-0.4, 0.7])
    f = forcing.at(mu)
    ni = disc2d.nodes.n_interior
    assert np.allclose(f[:ni], manufactured_rhs(case, p, mu, disc2d.nodes.interior))
    assert np.allclose(f[ni:], case.u(disc2d.nodes.boundary))
    # continuous operator by hand: (1 + mu1 x) u_xx + (1 + mu2 y) u_yy
    x = disc2d.nodes.interior
    hand = (1 + mu[0] * x[:, 0]) * case.derivative(x, "xx") + (1 + mu[1] * x[:, 1]) * case.derivative(x, "yy")
    assert np.allclose(f[:ni], hand)


def test_rb_forcing_values(disc2d):
    p = get_problem("awave2d")
    f = p.rb_forcing(disc2d.nodes)
    x = disc2d.nodes.interior
    assert f.q == 1
    v = f.at([1.0, 1.0])
    assert np.allclose(v[: len(x)], -10 * np.sin(8 * x[:, 0] * (x[:, 1] - 1)))
    assert np.all(v[len(x):] == 0)


def test_dimension_mismatch(disc2d):
    with pytest.raises(ValueError):
        get_problem("awave2d").manufactured_forcing(get_case("test1_3d"), disc2d.nodes)
