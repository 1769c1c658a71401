"""Market scenario generation: PCA yield-curve factors and a GBM equity index.

Daily curve increments are summarized by their mean and covariance; the top
principal components drive simulated monthly increments

    dY = n_days * mu + sum_k Z_k * v_k,   Z_k ~ N(0, n_days * lambda_k),

with ``n_days`` trading days per month.  The equity index follows a
geometric Brownian motion with monthly log returns
``N((drift - vol^2 / 2) / 12, vol^2 / 12)``, independent of the curve.

Every scenario draws its noise from a dedicated counter-based substream
keyed by ``(seed, scenario_index)`` with a fixed (time, variable) layout, so
batches are bit-for-bit reproducible no matter how generation is chunked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EquityParams",
    "PcaModel",
    "calibrate_pca",
    "increment_from_normals",
    "sample_curve_increment",
    "sample_equity_step",
    "ScenarioBatch",
    "generate_batch",
    "scenario_rng",
]

#: Eigenvalues of the increment covariance below this are treated as noise
#: and clipped to zero.
EIGENVALUE_FLOOR = -1e-10


@dataclass(frozen=True)
class EquityParams:
    """GBM equity index: start level, annual drift, annual volatility."""

    s0: float = 100.0
    drift: float = 0.05
    volatility: float = 0.18

    def __post_init__(self) -> None:
        if not (math.isfinite(self.s0) and self.s0 > 0.0):
            raise ValueError("equity start level must be positive")
        if not (math.isfinite(self.drift) and math.isfinite(self.volatility)):
            raise ValueError("equity drift and volatility must be finite")
        if self.volatility < 0.0:
            raise ValueError("equity volatility must be non-negative")

    @property
    def monthly_mean(self) -> float:
        return (self.drift - 0.5 * self.volatility**2) / 12.0

    @property
    def monthly_std(self) -> float:
        return self.volatility / math.sqrt(12.0)


@dataclass(frozen=True)
class PcaModel:
    """Calibrated daily-increment model: mean vector plus spectral factors.

    ``eigvals``/``eigvecs`` hold the full spectrum in descending order with
    orthonormal columns; only the first ``n_factors`` components are used
    for simulation.
    """

    mu: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    n_factors: int
    trading_days: int

    def __post_init__(self) -> None:
        n = self.mu.shape[0]
        if self.eigvecs.shape != (n, n) or self.eigvals.shape != (n,):
            raise ValueError("inconsistent PCA model shapes")
        if not 1 <= self.n_factors <= n:
            raise ValueError("n_factors must lie between 1 and the grid size")
        if self.trading_days < 1:
            raise ValueError("trading_days must be positive")
        if np.any(self.eigvals < 0.0):
            raise ValueError("eigenvalues must be non-negative")
        if np.any(np.diff(self.eigvals) > 0.0):
            raise ValueError("eigenvalues must be sorted in descending order")

    @property
    def factor_loadings(self) -> np.ndarray:
        """Loadings ``v_k * sqrt(trading_days * lambda_k)`` for the monthly
        increment noise, shape ``(n, n_factors)``."""
        k = self.n_factors
        return self.eigvecs[:, :k] * np.sqrt(self.trading_days * self.eigvals[:k])

    @property
    def monthly_mean(self) -> np.ndarray:
        return self.trading_days * self.mu


def calibrate_pca(history: np.ndarray, n_factors: int, trading_days: int = 22) -> PcaModel:
    """Calibrate the factor model from a daily yield-curve history.

    Parameters
    ----------
    history : array, shape (n_days, n)
        Daily curves, oldest first, on the monthly maturity grid.
    n_factors : int
        Number of principal components to simulate with.
    trading_days : int
        Trading days per month used for daily-to-monthly scaling.

    Notes
    -----
    The sample covariance uses the ``n - 1`` normalization.  Tiny negative
    eigenvalues from finite-precision symmetrization are clipped to zero.
    """
    curves = np.asarray(history, dtype=float)
    if curves.ndim != 2:
        raise ValueError("history must be a 2-D array of daily curves")
    if curves.shape[0] < n_factors + 2:
        raise ValueError(
            f"history has {curves.shape[0]} days; need at least {n_factors + 2}"
        )
    if not np.all(np.isfinite(curves)):
        raise ValueError("history contains non-finite yields")
    increments = np.diff(curves, axis=0)
    mu = increments.mean(axis=0)
    q = np.cov(increments, rowvar=False, ddof=1)
    q = np.atleast_2d(q)
    eigvals, eigvecs = np.linalg.eigh(q)
    eigvals = eigvals[::-1].copy()
    eigvecs = eigvecs[:, ::-1].copy()
    if np.any(eigvals < EIGENVALUE_FLOOR):
        raise ValueError("increment covariance has a significantly negative eigenvalue")
    eigvals = np.clip(eigvals, 0.0, None)
    return PcaModel(mu=mu, eigvals=eigvals, eigvecs=eigvecs,
                    n_factors=n_factors, trading_days=trading_days)


def increment_from_normals(model: PcaModel, z: np.ndarray) -> np.ndarray:
    """Monthly curve increment from standard normals ``z`` of shape (..., k)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.n_factors:
        raise ValueError("normal draw count must equal n_factors")
    return model.monthly_mean + z @ model.factor_loadings.T


def sample_curve_increment(model: PcaModel, rng: np.random.Generator) -> np.ndarray:
    """Draw one monthly curve increment."""
    return increment_from_normals(model, rng.standard_normal(model.n_factors))


def sample_equity_step(prev: float, params: EquityParams, rng: np.random.Generator) -> float:
    """Advance the equity index by one month of GBM."""
    if not prev > 0.0:
        raise ValueError("equity level must be positive")
    g = rng.normal(params.monthly_mean, params.monthly_std)
    return prev * math.exp(g)


@dataclass(frozen=True)
class ScenarioBatch:
    """Simulated market paths on a common monthly grid.

    ``curves`` has shape ``(count, horizon + 1, n)`` and ``equity``
    ``(count, horizon + 1)``; index 0 along the time axis is the shared
    anchor state.
    """

    curves: np.ndarray
    equity: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        if self.curves.ndim != 3 or self.equity.ndim != 2:
            raise ValueError("inconsistent scenario batch shapes")
        if self.curves.shape[:2] != self.equity.shape:
            raise ValueError("curve and equity grids differ")

    @property
    def count(self) -> int:
        return self.curves.shape[0]

    @property
    def horizon(self) -> int:
        return self.curves.shape[1] - 1

    def subset(self, index: np.ndarray) -> "ScenarioBatch":
        """View of the selected scenarios (used for minibatching)."""
        return ScenarioBatch(self.curves[index], self.equity[index], self.seed)


def scenario_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for one scenario's substream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def generate_batch(
    anchor_curve: np.ndarray,
    model: PcaModel,
    equity_params: EquityParams,
    horizon: int,
    count: int,
    seed: int,
) -> ScenarioBatch:
    """Generate ``count`` scenarios of ``horizon`` monthly steps.

    Scenario ``i`` consumes a ``(horizon, n_factors + 1)`` block of standard
    normals from its own substream: columns ``0..n_factors-1`` drive the
    curve factors, the last column the equity return.  The block layout ties
    each draw to its (time, variable) slot, so results do not depend on how
    scenarios are grouped into batches.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least one month")
    if count < 0:
        raise ValueError("scenario count must be non-negative")
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    anchor = np.asarray(anchor_curve, dtype=float)
    n = anchor.shape[-1]
    if model.mu.shape[0] != n:
        raise ValueError("model grid and anchor curve grid differ")
    k = model.n_factors
    z = np.empty((count, horizon, k + 1))
    for i in range(count):
        z[i] = scenario_rng(seed, i).standard_normal((horizon, k + 1))

    increments = increment_from_normals(model, z[..., :k])
    curves = np.empty((count, horizon + 1, n))
    curves[:, 0] = anchor
    curves[:, 1:] = anchor + np.cumsum(increments, axis=1)

    log_returns = equity_params.monthly_mean + equity_params.monthly_std * z[..., k]
    equity = np.empty((count, horizon + 1))
    equity[:, 0] = equity_params.s0
    equity[:, 1:] = equity_params.s0 * np.exp(np.cumsum(log_returns, axis=1))
    return ScenarioBatch(curves=curves, equity=equity, seed=seed)
