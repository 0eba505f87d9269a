import numpy as np
import pytest
import scipy.sparse as sp

from reducedrbf.kernels import Kernel, partial
from reducedrbf.nodes import NodeSet, build_stencils
from reducedrbf.numerics import SparseLU
from reducedrbf.rbffd import (Discretization, StencilError, TruthSolveError, TruthSystem,
                              assemble_diff_matrix, global_diff_matrix, local_weights, truth_solve)


@pytest.mark.parametrize("deriv", ["xx", "yy", "x", "xy"])
def test_weights_exact_on_translates(deriv):
    rng = np.random.default_rng(0)
    k = Kernel("imq", 3.0)
    for _ in range(20):
        pts = rng.uniform(-1, 1, (30, 2)) * 0.3
        w = local_weights(pts, k, deriv)
        for c in pts[:5]:
            vals = partial(k, c, pts)
            exact = partial(k, c, pts[0], deriv)
            assert w @ vals == pytest.approx(exact, rel=1e-9, abs=1e-9 * np.abs(w).sum() * 1e-3)


def test_multiple_derivatives_share_factorization():
    pts = np.random.default_rng(1).uniform(-0.3, 0.3, (20, 2))
    k = Kernel("ga", 2.0)
    W = local_weights(pts, k, ["xx", "yy"])
    assert np.allclose(W[0], local_weights(pts, k, "xx"))
    assert np.allclose(W[1], local_weights(pts, k, "yy"))


def test_local_rows_equal_global_when_stencil_is_everything():
    pts = np.random.default_rng(2).uniform(-1, 1, (40, 2))
    k = Kernel("imq", 3.0)
    st = build_stencils(pts, 40)
    D = assemble_diff_matrix(pts, st, k, "xx").toarray()
    G = global_diff_matrix(pts, k, "xx")
    assert np.abs(D - G).max() <= 1e-8 * np.abs(G).max()


def test_stencil_error_names_master():
    pts = np.random.default_rng(3).uniform(-1, 1, (60, 2))
    k = Kernel("imq", 0.01)  # nearly flat, numerically singular
    with pytest.raises(StencilError) as exc:
        assemble_diff_matrix(pts, build_stencils(pts, 40), k, "xx")
    assert exc.value.master == 0


def test_discretization_caches():
    pts = np.random.default_rng(4).uniform(-1, 1, (50, 2))
    d = Discretization(NodeSet(pts, 40), Kernel("imq", 3.0), 10)
    a = d.diff("xx")
    assert d.diff("xx") is a
    assert a.shape == (50, 50) and a.nnz == 500


def test_laplacian_of_smooth_function_converges():
    # rows-sum sanity: weights nearly annihilate constants and reproduce quadratics
    g = np.linspace(-1, 1, 21)
    pts = np.array([(x, y) for x in g for y in g])
    k = Kernel("imq", 1.0)
    D = assemble_diff_matrix(pts, build_stencils(pts, 25), k, "xx")
    u = pts[:, 0] ** 2
    interior = np.all(np.abs(pts) < 0.7, axis=1)
    assert np.abs(D @ u - 2.0)[interior].max() < 1e-2


def test_truth_solve_identity_system():
    A = sp.identity(5, format="csr") * 2.0
    sol = truth_solve(TruthSystem(A, np.arange(5.0), (0.0,), 5))
    assert np.allclose(sol.values, np.arange(5.0) / 2)
    assert sol.residual < 1e-14


def test_truth_solve_reuses_factor_and_rejects_singular():
    rng = np.random.default_rng(5)
    A = sp.csr_matrix(rng.standard_normal((6, 6)) + 6 * np.eye(6))
    b = rng.standard_normal(6)
    assert np.allclose(truth_solve(TruthSystem(A, b, (0,), 6), SparseLU(A)).values, np.linalg.solve(A.toarray(), b))
    S = sp.csr_matrix(np.ones((3, 3)))
    with pytest.raises(TruthSolveError):
        truth_solve(TruthSystem(S, np.ones(3), (0,), 3))
