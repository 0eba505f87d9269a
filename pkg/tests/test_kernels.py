import numpy as np
import pytest

from reducedrbf.kernels import Family, Kernel, KernelError, evaluate, parse_deriv, partial, partial_matrix

SMOOTH = ["imq", "mq", "ga"]
ALL = SMOOTH + ["cubic", "tps"]
DERIVS_2D = ["x", "y", "xx", "yy", "xy"]


def fd(kernel, c, x, deriv, h=1e-5):
    """Central differences of partial(kernel, c, ., '')."""
    f = lambda p: partial(kernel, c, p)
    e = np.eye(len(x))
    if len(deriv) == 1:
        i = "xyz".index(deriv)
        return (f(x + h * e[i]) - f(x - h * e[i])) / (2 * h)
    i, j = ("xyz".index(deriv[0]), "xyz".index(deriv[1]))
    h = 1e-4
    return (f(x + h * e[i] + h * e[j]) - f(x + h * e[i] - h * e[j])
            - f(x - h * e[i] + h * e[j]) + f(x - h * e[i] - h * e[j])) / (4 * h * h)


@pytest.mark.parametrize("family", ALL)
@pytest.mark.parametrize("deriv", DERIVS_2D)
def test_partials_match_finite_differences(family, deriv):
    rng = np.random.default_rng(1)
    k = Kernel(family, 1.3)
    for _ in range(10):
        c, x = rng.uniform(-1, 1, (2, 2))
        exact = partial(k, c, x, deriv)
        approx = fd(k, c, x, deriv)
        assert exact == pytest.approx(approx, rel=1e-5, abs=1e-6)


@pytest.mark.parametrize("deriv", ["x", "z", "xz", "zz", "yz"])
def test_partials_3d(deriv):
    rng = np.random.default_rng(2)
    k = Kernel("imq", 0.75)
    c, x = rng.uniform(-1, 1, (2, 3))
    assert partial(k, c, x, deriv) == pytest.approx(fd(k, c, x, deriv), rel=1e-5, abs=1e-7)


def test_closed_forms():
    r = np.linspace(0, 3, 7)
    assert np.allclose(evaluate(Kernel("imq", 1), r), 1 / np.sqrt(1 + r**2))
    assert np.allclose(evaluate(Kernel("mq", 1), r), np.sqrt(1 + r**2))
    assert np.allclose(evaluate(Kernel("ga", 1), r), np.exp(-r**2))
    assert np.allclose(evaluate(Kernel("cubic", 1), r), r**3)
    with np.errstate(divide="ignore", invalid="ignore"):
        tps = np.where(r > 0, r**2 * np.log(r), 0.0)
    assert np.allclose(evaluate(Kernel("tps", 1), r), tps)


def test_shape_parameter_scales_distance():
    k = Kernel("imq", 3.0)
    assert partial(k, [0.0, 0.0], [0.1, 0.2]) == pytest.approx(1 / np.sqrt(1 + 9 * 0.05))


def test_smooth_second_derivatives_at_center():
    # IMQ: phi = (1 + e^2 |x|^2)^(-1/2) -> d_xx at 0 is -e^2
    k = Kernel("imq", 2.0)
    assert partial(k, [0.0, 0.0], [0.0, 0.0], "xx") == pytest.approx(-4.0)
    assert partial(k, [0.0, 0.0], [0.0, 0.0], "xy") == 0.0
    assert partial(Kernel("ga", 2.0), [0, 0], [0, 0], "yy") == pytest.approx(-8.0)


def test_piecewise_center_limits():
    assert partial(Kernel("cubic", 1.0), [0, 0], [0, 0], "xx") == 0.0
    assert partial(Kernel("tps", 1.0), [0, 0], [0, 0], "x") == 0.0
    with pytest.raises(KernelError):
        partial(Kernel("tps", 1.0), [0, 0], [0, 0], "xx")


def test_gram_symmetric_and_matches_partial_matrix():
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, (12, 2))
    k = Kernel("ga", 1.5)
    G = k.gram(p)
    assert np.array_equal(G, G.T)
    assert np.allclose(G, partial_matrix(k, p, p))
    assert np.allclose(np.diag(G), k.phi0)


def test_invalid_inputs():
    with pytest.raises(KernelError):
        Kernel("imq", 0.0)
    with pytest.raises(ValueError):
        Kernel("nope", 1.0)
    with pytest.raises(KernelError):
        evaluate(Kernel("imq", 1.0), -1.0)
    with pytest.raises(KernelError):
        parse_deriv("xxx", 2)
    with pytest.raises(KernelError):
        parse_deriv("z", 2)
    with pytest.raises(KernelError):
        parse_deriv("q", 3)


def test_positive_definite_families():
    assert Kernel("imq", 1).positive_definite and Kernel("ga", 1).positive_definite
    assert not Kernel(Family.MQ, 1).positive_definite
