import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bcdprox.errors import ContractError, NumericDomainError
from bcdprox.models import (
    BENCHMARKS,
    FitzHughNagumoLinear,
    benchmark_registry,
    eval_field,
    eval_param_jacobian,
    eval_state_jacobian,
    make_model,
)
from conftest import central_diff

ALL_MODELS = list(BENCHMARKS) + ["fitzhugh_nagumo_linear"]


def _model(name):
    return FitzHughNagumoLinear() if name == "fitzhugh_nagumo_linear" else make_model(name)


def _probe(model, rng):
    x = rng.normal(size=model.d) * 2.0
    theta = rng.uniform(0.5, 3.0, size=model.p)
    return x, theta


def test_lotka_volterra_field_by_hand():
    lv = make_model("lotka_volterra")
    np.testing.assert_array_equal(eval_field(lv, [5.0, 3.0], [2.0, 1.0, 4.0, 1.0]), [-5.0, 57.0])


def test_fitzhugh_nagumo_field_by_hand():
    fhn = make_model("fitzhugh_nagumo")
    out = eval_field(fhn, [-1.0, 1.0], [0.5, 0.2, 3.0])
    # 3*(-1 + 1/3 + 1) = 1 ; -(-1 - 0.5 + 0.2)/3 = 1.3/3
    np.testing.assert_allclose(out, [1.0, 1.3 / 3.0], rtol=1e-15)


def test_lotka_volterra_param_jacobian_by_hand():
    lv = make_model("lotka_volterra")
    J = eval_param_jacobian(lv, [5.0, 3.0], [2.0, 1.0, 4.0, 1.0])
    np.testing.assert_array_equal(J, [[5, -15, 0, 0], [0, 0, 15, -3]])


def test_lorenz96_param_jacobian_is_ones():
    l96 = make_model("lorenz96")
    x = np.random.default_rng(3).normal(size=40)
    np.testing.assert_array_equal(eval_param_jacobian(l96, x, [8.0]), np.ones((40, 1)))


@pytest.mark.parametrize("name", ALL_MODELS)
def test_jacobians_match_finite_differences(name):
    model = _model(name)
    rng = np.random.default_rng(11)
    for _ in range(10):
        x, theta = _probe(model, rng)
        Jx = eval_state_jacobian(model, x, theta)
        Jt = eval_param_jacobian(model, x, theta)
        for k in range(model.d):
            fd = central_diff(lambda z: model.field(z, theta)[k], x)
            np.testing.assert_allclose(Jx[k], fd, rtol=1e-6, atol=1e-6 * (1 + np.abs(fd).max()))
            fd = central_diff(lambda t: model.field(x, t)[k], theta)
            np.testing.assert_allclose(Jt[k], fd, rtol=1e-6, atol=1e-6 * (1 + np.abs(fd).max()))


@pytest.mark.parametrize("name", ALL_MODELS)
def test_vector_jacobian_products_match_dense_jacobians(name):
    model = _model(name)
    rng = np.random.default_rng(5)
    X = rng.normal(size=(model.d, 7))
    V = rng.normal(size=(model.d, 7))
    theta = rng.uniform(0.5, 3.0, size=model.p)
    svjp = model.state_vjp(X, theta, V)
    pv = model.param_vjp(X, theta, V)
    expect_p = np.zeros(model.p)
    for c in range(7):
        np.testing.assert_allclose(svjp[:, c], model.state_jacobian(X[:, c], theta).T @ V[:, c],
                                   rtol=1e-12, atol=1e-12)
        expect_p += model.param_jacobian(X[:, c], theta).T @ V[:, c]
    np.testing.assert_allclose(pv, expect_p, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", ["lotka_volterra", "rossler", "lorenz96", "fitzhugh_nagumo_linear"])
def test_linear_decomposition_consistent(name):
    model = _model(name)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, theta = _probe(model, rng)
        f = model.field(x, theta)
        lin = model.f0(x) + model.f1(x) @ theta
        assert np.linalg.norm(f - lin) <= 1e-12 * (1 + np.linalg.norm(f))
        np.testing.assert_array_equal(model.param_jacobian(x, theta), model.f1(x))


@pytest.mark.parametrize("name", ["lotka_volterra", "rossler", "lorenz96"])
def test_param_jacobian_independent_of_theta(name):
    model = make_model(name)
    rng = np.random.default_rng(8)
    x, t1 = _probe(model, rng)
    _, t2 = _probe(model, rng)
    np.testing.assert_array_equal(model.param_jacobian(x, t1), model.param_jacobian(x, t2))


@pytest.mark.parametrize("name", ["lotka_volterra", "rossler", "fitzhugh_nagumo_linear"])
def test_field_vanishes_when_parameters_cancel_drift(name):
    model = _model(name)
    x = np.random.default_rng(4).normal(size=model.d)
    if name == "rossler":
        x[2] = -x[1]  # the parameter-free row -x1 - x2 must vanish on its own
    theta = np.linalg.lstsq(model.f1(x), -model.f0(x), rcond=None)[0]
    np.testing.assert_allclose(model.field(x, theta), 0.0, atol=1e-12)


def test_fitzhugh_nagumo_linear_reparameterization_matches_original():
    orig = make_model("fitzhugh_nagumo")
    lin = FitzHughNagumoLinear()
    theta = np.array([0.5, 0.2, 3.0])
    c = FitzHughNagumoLinear.from_original(theta)
    for x in np.random.default_rng(1).normal(size=(10, 2)):
        np.testing.assert_allclose(lin.field(x, c), orig.field(x, theta), rtol=1e-14, atol=1e-14)


@given(st.integers(min_value=1, max_value=39),
       st.lists(st.floats(-5, 5), min_size=40, max_size=40))
def test_lorenz96_rotation_equivariance(shift, xs):
    l96 = make_model("lorenz96")
    x = np.array(xs)
    lhs = l96.field(np.roll(x, shift), np.array([8.0]))
    rhs = np.roll(l96.field(x, np.array([8.0])), shift)
    np.testing.assert_array_equal(lhs, rhs)


def test_lorenz96_wraparound_by_hand():
    l96 = make_model("lorenz96")
    x = np.arange(40, dtype=float)
    f = l96.field(x, np.array([8.0]))
    # component 0: (x1 - x38) * x39 - x0 + 8
    assert f[0] == (1.0 - 38.0) * 39.0 - 0.0 + 8.0
    # component 39: (x0 - x37) * x38 - x39 + 8
    assert f[39] == (0.0 - 37.0) * 38.0 - 39.0 + 8.0


def test_registry_settings():
    b = benchmark_registry("lotka_volterra")
    assert (b.model.d, b.model.p) == (2, 4)
    np.testing.assert_array_equal(b.theta, [2, 1, 4, 1])
    np.testing.assert_array_equal(b.x1, [5, 3])
    assert len(b.grid) == 20 and b.grid.gaps[0] == pytest.approx(0.1)

    b = benchmark_registry("lorenz96")
    assert (b.model.d, b.model.p) == (40, 1)
    np.testing.assert_array_equal(b.theta, [8.0])
    assert len(b.grid) == 400

    b = benchmark_registry("rossler")
    np.testing.assert_array_equal(b.x1, [1.13, -1.74, 0.02])
    np.testing.assert_array_equal(benchmark_registry("fitzhugh_nagumo").theta, [0.5, 0.2, 3.0])


def test_registry_returns_fresh_copies():
    a = benchmark_registry("rossler")
    a.theta[0] = 99.0
    assert benchmark_registry("rossler").theta[0] == 0.2


def test_lorenz96_initial_state_depends_on_seed_only():
    a = benchmark_registry("lorenz96", seed=3).x1
    b = benchmark_registry("lorenz96", seed=3).x1
    c = benchmark_registry("lorenz96", seed=4).x1
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_unknown_model():
    with pytest.raises(KeyError):
        benchmark_registry("van_der_pol")


def test_dimension_and_domain_errors():
    lv = make_model("lotka_volterra")
    with pytest.raises(ContractError):
        eval_field(lv, [1.0, 2.0, 3.0], [2, 1, 4, 1])
    with pytest.raises(ContractError):
        eval_field(lv, [1.0, 2.0], [2, 1, 4])
    with pytest.raises(NumericDomainError):
        eval_field(make_model("lorenz96"), 1e200 * (-1.0) ** np.arange(40), [8.0])
