"""Factor calibration and scenario generation tests.

Oracles
-------
- PCA is checked on a history built from known orthogonal factor loadings,
  which the spectral decomposition must recover (up to sign).
- A three-row history gives a covariance small enough to verify the n-1
  normalization by hand.
- Scenario reconstruction: the exact curve and equity paths are rebuilt in
  the test from the documented substream layout and must match bit for bit.

Invariants
----------
- Scenario i depends only on (seed, i), never on batch size or ordering.
- Moments of simulated increments converge to the calibrated model's.
"""

from __future__ import annotations

import numpy as np
import pytest

from almsim.scenarios import (
    EquityParams,
    PcaModel,
    ScenarioBatch,
    calibrate_pca,
    generate_batch,
    increment_from_normals,
    sample_curve_increment,
    sample_equity_step,
    scenario_rng,
)

GRID = 24


def _synthetic_history(n_days: int = 4000, seed: int = 5) -> np.ndarray:
    """Daily curves driven by two known orthonormal factor shapes."""
    rng = np.random.default_rng(seed)
    level = np.ones(GRID) / np.sqrt(GRID)
    tilt = np.linspace(-1.0, 1.0, GRID)
    tilt -= tilt @ level * level
    tilt /= np.linalg.norm(tilt)
    z = rng.standard_normal((n_days, 2))
    increments = 8e-4 * np.outer(z[:, 0], level) + 3e-4 * np.outer(z[:, 1], tilt)
    return 0.04 + np.cumsum(increments, axis=0)


def test_calibrate_recovers_known_factors():
    history = _synthetic_history()
    model = calibrate_pca(history, n_factors=2)
    # two dominant eigenvalues near the construction variances
    assert model.eigvals[0] == pytest.approx(8e-4**2, rel=0.1)
    assert model.eigvals[1] == pytest.approx(3e-4**2, rel=0.1)
    assert model.eigvals[2] < 1e-12
    # leading eigenvector is the (sign-fixed) level shape
    level = np.ones(GRID) / np.sqrt(GRID)
    v0 = model.eigvecs[:, 0]
    assert abs(abs(v0 @ level) - 1.0) < 1e-4  # finite-sample factor mixing


def test_calibrate_covariance_normalization_by_hand():
    history = np.array([[0.02, 0.03], [0.021, 0.032], [0.019, 0.031]])
    model = calibrate_pca(history, n_factors=1, trading_days=22)
    increments = np.diff(history, axis=0)
    np.testing.assert_allclose(model.mu, increments.mean(axis=0), atol=1e-18)
    manual = (increments - increments.mean(axis=0)).T @ (
        increments - increments.mean(axis=0)
    ) / (len(increments) - 1)
    assert model.eigvals.sum() == pytest.approx(np.trace(manual), abs=1e-18)


def test_calibrate_rejects_bad_history():
    with pytest.raises(ValueError):
        calibrate_pca(np.zeros((3, 4, 2)), 1)
    with pytest.raises(ValueError):
        calibrate_pca(np.zeros((2, 4)), 1)
    bad = np.zeros((10, 4))
    bad[3, 2] = np.nan
    with pytest.raises(ValueError):
        calibrate_pca(bad, 1)


def test_model_validation():
    n = 4
    eye = np.eye(n)
    vals = np.array([3.0, 2.0, 1.0, 0.5])
    PcaModel(np.zeros(n), vals, eye, 2, 22)  # fine
    with pytest.raises(ValueError):
        PcaModel(np.zeros(n), vals[::-1].copy(), eye, 2, 22)  # ascending
    with pytest.raises(ValueError):
        PcaModel(np.zeros(n), -vals, eye, 2, 22)
    with pytest.raises(ValueError):
        PcaModel(np.zeros(n), vals, eye, 0, 22)
    with pytest.raises(ValueError):
        PcaModel(np.zeros(n), vals, eye, 5, 22)


def test_factor_loadings_scaling():
    model = calibrate_pca(_synthetic_history(), n_factors=2, trading_days=22)
    loadings = model.factor_loadings
    assert loadings.shape == (GRID, 2)
    np.testing.assert_allclose(
        (loadings**2).sum(axis=0), 22 * model.eigvals[:2], rtol=1e-12
    )
    np.testing.assert_allclose(model.monthly_mean, 22 * model.mu, rtol=1e-15)


def test_increment_from_normals_shape_check():
    model = calibrate_pca(_synthetic_history(), n_factors=2)
    with pytest.raises(ValueError):
        increment_from_normals(model, np.zeros(3))


def test_equity_params_monthly_moments():
    p = EquityParams(s0=100.0, drift=0.05, volatility=0.18)
    assert p.monthly_mean == pytest.approx((0.05 - 0.5 * 0.18**2) / 12.0)
    assert p.monthly_std == pytest.approx(0.18 / np.sqrt(12.0))
    with pytest.raises(ValueError):
        EquityParams(s0=-1.0)
    with pytest.raises(ValueError):
        EquityParams(volatility=-0.1)


# --- batch generation -------------------------------------------------------------


@pytest.fixture(scope="module")
def model():
    return calibrate_pca(_synthetic_history(), n_factors=2, trading_days=22)


ANCHOR = np.full(GRID, 0.04)
EQ = EquityParams()


def test_batch_shapes_and_anchor(model):
    batch = generate_batch(ANCHOR, model, EQ, horizon=10, count=7, seed=42)
    assert batch.curves.shape == (7, 11, GRID)
    assert batch.equity.shape == (7, 11)
    assert batch.count == 7 and batch.horizon == 10
    np.testing.assert_array_equal(batch.curves[:, 0], np.tile(ANCHOR, (7, 1)))
    np.testing.assert_array_equal(batch.equity[:, 0], 100.0)


def test_batch_deterministic_and_seed_sensitive(model):
    a = generate_batch(ANCHOR, model, EQ, 10, 5, seed=42)
    b = generate_batch(ANCHOR, model, EQ, 10, 5, seed=42)
    c = generate_batch(ANCHOR, model, EQ, 10, 5, seed=43)
    np.testing.assert_array_equal(a.curves, b.curves)
    np.testing.assert_array_equal(a.equity, b.equity)
    assert not np.array_equal(a.curves, c.curves)


def test_scenarios_do_not_depend_on_batch_size(model):
    """The substream contract: scenario i is a function of (seed, i) only."""
    big = generate_batch(ANCHOR, model, EQ, 12, 9, seed=7)
    small = generate_batch(ANCHOR, model, EQ, 12, 3, seed=7)
    np.testing.assert_array_equal(big.curves[:3], small.curves)
    np.testing.assert_array_equal(big.equity[:3], small.equity)


def test_batch_matches_documented_stream_layout(model):
    """Rebuild scenario 4 from scratch off the raw substream."""
    horizon, k = 8, model.n_factors
    batch = generate_batch(ANCHOR, model, EQ, horizon, 6, seed=99)
    z = scenario_rng(99, 4).standard_normal((horizon, k + 1))
    curve = ANCHOR.copy()
    s = EQ.s0
    for t in range(horizon):
        curve = curve + model.monthly_mean + model.factor_loadings @ z[t, :k]
        s = s * np.exp(EQ.monthly_mean + EQ.monthly_std * z[t, k])
        np.testing.assert_allclose(batch.curves[4, t + 1], curve, atol=1e-15)
        assert batch.equity[4, t + 1] == pytest.approx(s, rel=1e-14)


def test_subset_views(model):
    batch = generate_batch(ANCHOR, model, EQ, 6, 10, seed=1)
    index = np.array([8, 1, 3])
    sub = batch.subset(index)
    assert sub.count == 3
    np.testing.assert_array_equal(sub.curves, batch.curves[index])
    assert sub.seed == batch.seed


def test_generate_batch_validation(model):
    with pytest.raises(ValueError):
        generate_batch(ANCHOR, model, EQ, 0, 5, seed=1)
    with pytest.raises(ValueError):
        generate_batch(ANCHOR, model, EQ, 5, -1, seed=1)
    with pytest.raises(ValueError):
        generate_batch(ANCHOR, model, EQ, 5, 5, seed=-2)
    with pytest.raises(ValueError):
        generate_batch(np.zeros(GRID + 1), model, EQ, 5, 5, seed=1)


def test_monthly_increment_moments(model):
    """Simulated first/second moments converge to the model's."""
    batch = generate_batch(ANCHOR, model, EQ, horizon=1, count=20000, seed=3)
    inc = batch.curves[:, 1, :] - ANCHOR
    np.testing.assert_allclose(inc.mean(axis=0), model.monthly_mean, atol=3e-5)
    loadings = model.factor_loadings
    target = loadings @ loadings.T
    sample = np.cov(inc, rowvar=False, ddof=1)
    assert np.abs(sample - target).max() < 5e-7

    logret = np.log(batch.equity[:, 1] / EQ.s0)
    assert logret.mean() == pytest.approx(EQ.monthly_mean, abs=3 * EQ.monthly_std / np.sqrt(20000))
    assert logret.std(ddof=1) == pytest.approx(EQ.monthly_std, rel=0.03)


def test_equity_is_independent_of_curve_factors(model):
    batch = generate_batch(ANCHOR, model, EQ, horizon=1, count=20000, seed=8)
    inc = batch.curves[:, 1, :] - ANCHOR
    logret = np.log(batch.equity[:, 1] / EQ.s0)
    level = inc.mean(axis=1)
    corr = np.corrcoef(level, logret)[0, 1]
    assert abs(corr) < 0.03


def test_single_step_samplers(model):
    rng = np.random.default_rng(0)
    inc = sample_curve_increment(model, rng)
    assert inc.shape == (GRID,)
    s1 = sample_equity_step(100.0, EQ, rng)
    assert s1 > 0.0
    with pytest.raises(ValueError):
        sample_equity_step(-5.0, EQ, rng)


def test_batch_shape_validation():
    with pytest.raises(ValueError):
        ScenarioBatch(np.zeros((3, 5, 4)), np.zeros((3, 4)), seed=0)
    with pytest.raises(ValueError):
        ScenarioBatch(np.zeros((3, 5)), np.zeros((3, 5)), seed=0)
