import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone
from sklearn.gaussian_process.kernels import Matern

from qek.bayesopt import (BoConfig, DurationBounds, GpHyperparams, GpState, MaternGP,
                          gp_posterior, log_posterior, map_refit, matern52, matern52_matrix,
                          optimize, propose_next, ucb)

HP = GpHyperparams()


def test_matern_at_zero_and_infinity():
    assert matern52(np.zeros(5), np.zeros(5)) == pytest.approx(100.0)
    assert matern52([0.0], [1e4]) == pytest.approx(0.0, abs=1e-300)


def test_matern_at_length_scale():
    expected = 100 * (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
    assert matern52([0.0], [10.0]) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(52.40, abs=0.01)


def test_matern_matches_sklearn(rng):
    A = rng.uniform(0, 100, size=(15, 5))
    B = rng.uniform(0, 100, size=(9, 5))
    hp = GpHyperparams(length_scale=17.0, signal_std=3.0)
    ref = 9.0 * Matern(length_scale=17.0, nu=2.5)(A, B)
    np.testing.assert_allclose(matern52_matrix(A, B, hp), ref, rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (12, 5), elements=st.floats(0, 200)))
def test_gram_is_psd(X):
    K = matern52_matrix(X, X, HP) + HP.jitter * np.eye(12)
    assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_interpolates_observations(rng):
    X = rng.uniform(0, 100, size=(8, 2))
    y = rng.normal(size=8)
    state = GpState(X, y)
    mean, var = gp_posterior(state, X)
    np.testing.assert_allclose(mean, y, atol=1e-6)
    assert var.max() <= 1e-6 * 100


def test_reverts_to_prior_far_away(rng):
    state = GpState(np.array([[0.0, 0], [40, 0], [0, 40], [40, 40], [80, 80]]), np.full(5, 3.0))
    mean, var = gp_posterior(state, [1e4, 1e4])
    _, m, _ = state.factor()
    assert mean == pytest.approx(m) and var == pytest.approx(100.0)
    assert 0 < m < 3.0  # constant shrunk toward the prior mean 0


def test_sinusoid_regression_beats_prior():
    X = np.linspace(0, 60, 20)[:, None]
    f = lambda x: 5 * np.sin(x / 8.0)
    state = GpState(X, f(X).ravel())
    grid = np.linspace(0, 60, 500)[:, None]
    mean, _ = gp_posterior(state, grid)
    truth = f(grid).ravel()
    assert np.sqrt(np.mean((mean - truth) ** 2)) < np.sqrt(np.mean(truth**2))


def test_ucb_properties(rng):
    state = GpState(rng.uniform(0, 50, size=(4, 2)), rng.normal(size=4))
    x = np.array([25.0, 25.0])
    mean, var = gp_posterior(state, x)
    assert ucb(state, x, 0.0) == pytest.approx(mean)
    # only the jitter keeps the variance at an observation from being exactly 0
    assert ucb(state, state.X[0], 2.0) == pytest.approx(state.y[0], abs=1e-3)
    assert var > 0
    assert ucb(state, x, 1.0) < ucb(state, x, 2.0) < ucb(state, x, 3.0)


def test_map_refit_keeps_or_improves(rng):
    X = rng.uniform(0, 50, size=(12, 2))
    y = np.sin(X[:, 0] / 7) + 0.1 * X[:, 1]
    state = GpState(X, y)
    hp = map_refit(state, seed=1)
    assert log_posterior(X, y, hp) >= log_posterior(X, y, HP) - 1e-9


def test_map_refit_shrinks_signal_on_constant_data():
    state = GpState([[10.0, 10], [40, 20], [70, 60]], [0.0, 0.0, 0.0])
    assert map_refit(state).signal_std < HP.signal_std


def test_map_refit_recovers_length_scale():
    ratios = []
    for seed in range(7):
        r = np.random.default_rng(seed)
        X = r.uniform(0, 60, size=(40, 1))
        K = matern52_matrix(X, X, HP) + 1e-6 * np.eye(40)
        y = np.linalg.cholesky(K) @ r.normal(size=40)
        ratios.append(map_refit(GpState(X, y), seed=seed).length_scale / 10.0)
    assert 0.5 <= np.median(ratios) <= 2.0


@settings(max_examples=100, deadline=None)
@given(arrays(float, 5, elements=st.floats(-1e3, 1e3)))
def test_projection_is_feasible_and_idempotent(x):
    b = DurationBounds()
    p = b.project(x)
    assert b.feasible(p)
    np.testing.assert_allclose(b.project(p), p, atol=1e-9)


def test_projection_is_nearest(rng):
    b = DurationBounds()
    x = rng.uniform(0, 300, size=5)
    p = b.project(x)
    others = b.sample(rng, 20000)
    assert np.linalg.norm(x - p) <= np.linalg.norm(others - x, axis=1).min() + 1e-9


def test_samples_are_feasible(rng):
    b = DurationBounds()
    S = b.sample(rng, 5000)
    assert all(b.feasible(s) for s in S)


def test_cold_start_proposal():
    x = propose_next(GpState.empty(5), BoConfig(seed=4))
    assert DurationBounds().feasible(x)


def test_proposal_near_acquisition_optimum(rng):
    b = DurationBounds()
    c = np.array([80, 30, 60, 30, 50.0])
    X = b.sample(rng, 15)
    y = 10 - (((X - c) / 25) ** 2).sum(1)
    state = GpState(X, y)
    x = propose_next(state, BoConfig(seed=2), np.random.default_rng(2))
    ref = ucb(state, b.sample(np.random.default_rng(9), 10**5))
    assert b.feasible(x)
    assert ucb(state, x) >= np.quantile(ref, 0.99)


def test_optimize_constant_objective():
    _, v, trace = optimize(lambda x: 1.0, BoConfig(max_iterations=12, seed=0))
    assert len(trace.values) == 12 and v == 1.0
    assert all(DurationBounds().feasible(x) for x in trace.X)


def test_optimize_replay_and_monotone_incumbent():
    f = lambda x: -float(((x - 60) ** 2).sum()) / 1e3
    cfg = BoConfig(max_iterations=15, seed=5)
    a = optimize(f, cfg)[2]
    b = optimize(f, cfg)[2]
    np.testing.assert_array_equal(np.array(a.X), np.array(b.X))
    assert np.all(np.diff(a.incumbent) >= 0)


def test_optimize_records_errors():
    calls = []

    def f(x):
        calls.append(x)
        if len(calls) % 3 == 0:
            raise RuntimeError("boom")
        return float(-np.abs(x - 50).sum())

    _, _, trace = optimize(f, BoConfig(max_iterations=9, seed=1))
    assert len(trace.errors) == 3 and len(trace.values) == 6
    assert "boom" in next(iter(trace.errors.values()))


def test_estimator(rng):
    X = rng.uniform(0, 50, size=(10, 3))
    y = X.sum(1) / 50
    gp = MaternGP(refit=True)
    assert clone(gp).get_params() == gp.get_params()
    gp.fit(X, y)
    mean, std = gp.predict(X, return_std=True)
    np.testing.assert_allclose(mean, y, atol=1e-4)
    assert std.shape == (10,)
