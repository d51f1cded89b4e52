import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bcdprox.errors import ContractError, NumericDomainError
from bcdprox.minimize import CurvatureMemory, MinimizerConfig, minimize_smooth


def rosenbrock(z):
    x, y = z
    f = (1 - x) ** 2 + 100 * (y - x * x) ** 2
    g = np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])
    return f, g


@given(st.lists(st.floats(-50, 50), min_size=5, max_size=5),
       st.lists(st.floats(-50, 50), min_size=5, max_size=5))
def test_quadratic_reaches_centre(start, centre):
    c = np.array(centre)

    def fun(z):
        r = z - c
        return float(r @ r), 2 * r

    res = minimize_smooth(fun, np.array(start))
    np.testing.assert_allclose(res.x, c, rtol=0, atol=1e-8)


def test_rosenbrock_from_standard_start():
    res = minimize_smooth(rosenbrock, np.array([-1.2, 1.0]))
    np.testing.assert_allclose(res.x, [1.0, 1.0], rtol=0, atol=1e-5)
    assert res.fun < rosenbrock(np.array([-1.2, 1.0]))[0]


def test_stationary_start_is_returned_unchanged():
    x0 = np.array([1.0, 1.0])
    res = minimize_smooth(rosenbrock, x0)
    assert res.nit == 0 and res.status == "gtol"
    np.testing.assert_array_equal(res.x, x0)


def test_value_never_exceeds_start():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x0 = rng.normal(size=2) * 3
        res = minimize_smooth(rosenbrock, x0, MinimizerConfig(max_iter=5))
        assert res.fun <= rosenbrock(x0)[0]


def test_non_finite_start_raises():
    with pytest.raises(NumericDomainError):
        minimize_smooth(lambda z: (np.inf, np.zeros_like(z)), np.zeros(3))
    with pytest.raises(NumericDomainError):
        minimize_smooth(lambda z: (0.0, np.full_like(z, np.nan)), np.zeros(3))


def test_non_finite_region_shrinks_the_step():
    # the objective is undefined beyond z = 2; the minimum sits on the boundary side at 1.9
    def fun(z):
        if z[0] >= 2.0:
            return np.nan, np.full(1, np.nan)
        return (z[0] - 1.9) ** 2, np.array([2 * (z[0] - 1.9)])

    res = minimize_smooth(fun, np.array([-40.0]))
    assert res.x[0] == pytest.approx(1.9, abs=1e-8)


def test_max_iter_zero_returns_start():
    res = minimize_smooth(rosenbrock, np.array([-1.2, 1.0]), MinimizerConfig(max_iter=0))
    np.testing.assert_array_equal(res.x, [-1.2, 1.0])
    assert res.status == "max_iter"


def test_shared_memory_keeps_curvature():
    A = np.diag(np.arange(1.0, 21.0))

    def fun(z):
        return 0.5 * float(z @ A @ z), A @ z

    mem = CurvatureMemory(10)
    first = minimize_smooth(fun, np.ones(20), memory=mem)
    assert len(mem) > 0
    second = minimize_smooth(fun, np.ones(20) * 0.5, memory=mem)
    assert first.status == second.status == "gtol"


def test_shape_is_preserved():
    c = np.arange(6.0).reshape(2, 3)
    res = minimize_smooth(lambda z: (float(np.sum((z - c) ** 2)), 2 * (z - c)), np.zeros((2, 3)))
    assert res.x.shape == (2, 3)
    np.testing.assert_allclose(res.x, c, atol=1e-8)


def test_config_validation():
    with pytest.raises(ContractError):
        MinimizerConfig(c1=0.9, c2=0.1)
    with pytest.raises(ContractError):
        MinimizerConfig(history=0)
    with pytest.raises(ContractError):
        MinimizerConfig(max_ls_evals=0)
