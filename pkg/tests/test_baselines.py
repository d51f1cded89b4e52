import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcdprox.baselines import (
    EkfConfig,
    ShootingObjective,
    ekf_run,
    psd_project,
    shooting_lsq,
)
from bcdprox.discretize import TimeGrid, forward_predict, rk_integrate
from bcdprox.errors import ConditioningError, ContractError
from bcdprox.harness.data import NoiseSpec, generate_dataset, perturb_parameters
from bcdprox.models import benchmark_registry
from gradcheck import REL_STEP, _rel, _resolution


def _growth_data(n=101, rate=0.5):
    grid = TimeGrid(np.linspace(0.0, 1.0, n))
    return grid, np.exp(rate * grid.times)[None, :]


def test_ekf_tracks_noise_free_linear_growth(growth):
    grid, Y = _growth_data()
    res = ekf_run(growth, Y, [0.5], grid=grid)
    assert np.abs(res.X_est.values[:, 5:] - Y[:, 5:]).max() <= 1e-3


def test_ekf_covariance_psd_and_symmetric_every_step():
    ds = generate_dataset("fitzhugh_nagumo", None, None, NoiseSpec("gaussian", 0.5, 0))
    b = benchmark_registry("fitzhugh_nagumo")
    res = ekf_run(b.model, ds.observed, b.theta)
    assert len(res.steps) == len(ds.grid)
    for s in res.steps:
        assert np.all(np.isfinite(s.cov)) and np.all(np.isfinite(s.xi))
        assert np.abs(s.cov - s.cov.T).max() <= 1e-10 * max(1.0, np.abs(s.cov).max())
        assert np.linalg.eigvalsh(s.cov).min() >= -1e-10 * np.trace(s.cov)


def test_ekf_is_online():
    ds = generate_dataset("rossler", None, None, NoiseSpec("gaussian", 0.5, 0))
    b = benchmark_registry("rossler")
    full = ekf_run(b.model, ds.observed, b.theta)
    cut = 137
    prefix = ekf_run(b.model, ds.observed.values[:, :cut], b.theta, grid=TimeGrid(ds.grid.times[:cut]))
    for a, c in zip(prefix.steps, full.steps[:cut]):
        np.testing.assert_array_equal(a.xi, c.xi)
        np.testing.assert_array_equal(a.cov, c.cov)


def test_ekf_final_parameters_are_last_joint_state():
    ds = generate_dataset("lotka_volterra", None, None, NoiseSpec("gaussian", 0.1, 0))
    b = benchmark_registry("lotka_volterra")
    res = ekf_run(b.model, ds.observed, b.theta)
    np.testing.assert_array_equal(res.theta, res.steps[-1].params(2))
    np.testing.assert_array_equal(res.X_est.values[:, -1], res.steps[-1].state(2))


def test_psd_project_clips_tiny_negative_mass():
    V = np.linalg.qr(np.random.default_rng(0).normal(size=(4, 4)))[0]
    P = (V * np.array([-1e-9, 1.0, 2.0, 3.0])) @ V.T
    Q = psd_project(P)
    assert np.linalg.eigvalsh(Q).min() >= -1e-14
    np.testing.assert_array_equal(Q, Q.T)


def test_psd_project_rejects_indefinite():
    with pytest.raises(ConditioningError):
        psd_project(np.diag([1.0, -0.5]))
    with pytest.raises(ConditioningError):
        psd_project(np.diag([1.0, np.inf]))


def test_ekf_config_validation():
    with pytest.raises(ContractError):
        EkfConfig(initial_cov=0.0)
    with pytest.raises(ContractError):
        EkfConfig(measurement_var=-1.0)


def test_ekf_input_validation(growth):
    grid, Y = _growth_data()
    with pytest.raises(ContractError):
        ekf_run(growth, Y, [0.5])
    with pytest.raises(ContractError):
        ekf_run(growth, Y, [0.5, 1.0], grid=grid)


def _shooting_probe(name, m, rng):
    b = benchmark_registry(name)
    ds = generate_dataset(name, None, None, NoiseSpec("gaussian", 0.5, 0))
    obj = ShootingObjective(b.model, ds.observed.values, ds.grid, m)
    z = np.r_[b.x1 + 0.1 * rng.standard_normal(b.model.d), b.theta * (1 + 0.05 * rng.standard_normal(b.model.p))]
    return b, obj, z


@pytest.mark.parametrize("name", ["lotka_volterra", "fitzhugh_nagumo", "rossler", "lorenz96"])
def test_shooting_gradient_matches_finite_differences(name):
    rng = np.random.default_rng(3)
    b, obj, z = _shooting_probe(name, 1 if name == "lotka_volterra" else 3, rng)
    f0, g = obj(z)
    assert np.isfinite(f0)
    coords = np.arange(z.size) if z.size <= 10 else rng.choice(z.size, 10, replace=False)
    fd = np.empty(coords.size)
    for i, k in enumerate(coords):
        h = REL_STEP * (1 + abs(z[k]))
        zp, zm = z.copy(), z.copy()
        zp[k] += h
        zm[k] -= h
        fd[i] = (obj(zp)[0] - obj(zm)[0]) / (2 * h)
    h_min = REL_STEP * (1 + np.abs(z[coords]).min())
    assert _rel(g[coords], fd, _resolution(f0, h_min)) <= 1e-5


@pytest.mark.parametrize("name", ["fitzhugh_nagumo", "rossler", "lorenz96"])
def test_shooting_compiled_gradient_matches_reference(name):
    rng = np.random.default_rng(4)
    b, obj, z = _shooting_probe(name, 3, rng)
    d = b.model.d
    fast = obj(z)
    slow = obj._reference(z[:d], z[d:])
    assert fast[0] == pytest.approx(slow[0], rel=1e-12)
    np.testing.assert_allclose(fast[1], slow[1], rtol=1e-9, atol=1e-9 * np.abs(slow[1]).max())


def test_shooting_objective_infinite_when_prediction_diverges(growth):
    grid = TimeGrid(np.arange(100.0))
    obj = ShootingObjective(growth, np.ones((1, 100)), grid, 1)
    f, g = obj(np.array([1.0, 10.0]))
    assert f == np.inf and np.all(np.isnan(g))


@pytest.mark.parametrize("name,m", [("rossler", 3), ("fitzhugh_nagumo", 3), ("lotka_volterra", 1)])
def test_shooting_noise_free_matched_start(name, m):
    b = benchmark_registry(name)
    X = rk_integrate(b.model, b.theta, b.x1, b.grid).values
    res = shooting_lsq(b.model, X, b.theta, m=m, grid=b.grid)
    start = ShootingObjective(b.model, X, b.grid, m)(np.r_[X[:, 0], b.theta])[0]
    assert not res.failed
    # the misfit is the discretization error of the order-m prediction, and can only shrink
    assert res.value <= start
    Xh = forward_predict(b.model, b.theta, b.x1, b.grid, m).values
    assert start == pytest.approx(float(np.sum((Xh - X) ** 2)), rel=1e-12)


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_shooting_never_worse_than_start(replicate):
    ds = generate_dataset("fitzhugh_nagumo", (0.0, 5.0, 0.05), None, NoiseSpec("gaussian", 0.5, 0),
                          replicate=replicate)
    b = benchmark_registry("fitzhugh_nagumo")
    theta0 = perturb_parameters(ds.theta_true, 1.0, 0, replicate=replicate)
    obj = ShootingObjective(b.model, ds.observed.values, ds.grid, 3)
    start = obj(np.r_[ds.observed.values[:, 0], theta0])[0]
    res = shooting_lsq(b.model, ds.observed, theta0, m=3)
    assert res.failed or res.value <= start


def test_shooting_divergent_start_is_flagged(growth):
    grid = TimeGrid(np.arange(100.0))
    res = shooting_lsq(growth, np.ones((1, 100)), [10.0], m=1, grid=grid)
    assert res.failed and res.X_pred is None
    np.testing.assert_array_equal(res.theta, [10.0])
    np.testing.assert_array_equal(res.x1, [1.0])
