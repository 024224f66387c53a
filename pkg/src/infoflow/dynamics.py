"""Bond volatility, the innovations process and ensemble diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infoflow.errors import DegenerateSample, TooFewPaths
from infoflow.inference import bond_price, check_time, conditional_moments
from infoflow.io import write_csv
from infoflow.model import MarketModel, discount_to_maturity
from infoflow.paths import InfoPath, PathEnsemble, TimeGrid

DEFAULT_VOV_WINDOW = 11
MIN_CONDITIONAL_PATHS = 30


def volatility(model: MarketModel, t, xi):
    """``P_tT T/(T-t) cov(X_T, sigma X_T | xi_t)``; broadcasts over arrays."""
    t = check_time(model, t)
    m = conditional_moments(model, t, xi)
    vol = discount_to_maturity(model, t) * model.horizon / (model.horizon - t) * m.cov
    return float(vol) if np.ndim(vol) == 0 else vol


@dataclass(frozen=True)
class InnovationsPath:
    grid: TimeGrid
    w: np.ndarray


def _innovations(model: MarketModel, points: np.ndarray, xi: np.ndarray, mean_sx: np.ndarray) -> np.ndarray:
    T = model.horizon
    drift = (xi[..., :-1] - T * mean_sx[..., :-1]) / (T - points[:-1])
    dw = np.diff(xi, axis=-1) + np.diff(points) * drift
    w = np.zeros_like(xi)
    w[..., 1:] = np.cumsum(dw, axis=-1)
    return w


def innovations(path: InfoPath, model: MarketModel) -> InnovationsPath:
    """Left-point Euler reconstruction of the innovations Brownian motion."""
    pts = path.grid.points
    m = conditional_moments(model, pts, path.xi)
    return InnovationsPath(path.grid, _innovations(model, pts, np.asarray(path.xi), m.mean_sx))


def ensemble_innovations(ensemble: PathEnsemble, model: MarketModel) -> np.ndarray:
    pts = ensemble.grid.points
    m = conditional_moments(model, pts[None, :], ensemble.xi)
    return _innovations(model, pts, ensemble.xi, m.mean_sx)


def ensemble_prices(ensemble: PathEnsemble, model: MarketModel) -> np.ndarray:
    return bond_price(model, ensemble.grid.points[None, :], ensemble.xi)


def ensemble_vol_paths(ensemble: PathEnsemble, model: MarketModel) -> np.ndarray:
    return volatility(model, ensemble.grid.points[None, :], ensemble.xi)


@dataclass(frozen=True)
class VolDiagnostics:
    t_grid: TimeGrid
    mean_vol: np.ndarray
    vol_of_vol: np.ndarray
    n_paths: int

    def to_csv(self, path):
        rows = zip(self.t_grid.points, self.mean_vol, self.vol_of_vol)
        return write_csv(path, ["t", "mean_vol", "vol_of_vol"], rows)


def rolling_vol_of_vol(vol_paths: np.ndarray, points: np.ndarray, window: int = DEFAULT_VOV_WINDOW) -> np.ndarray:
    """Dispersion of standardised volatility increments in a centred window.

    For grid point ``j`` the increments ``(S_{k+1} - S_k) / sqrt(dt_k)`` of
    every path, for ``k`` within ``window // 2`` of ``j`` (clipped to the
    grid), are pooled and their standard deviation taken.
    """
    vol_paths = np.atleast_2d(vol_paths)
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if points.size < 2:
        return np.zeros(points.size)
    inc = np.diff(vol_paths, axis=1) / np.sqrt(np.diff(points))
    n_inc = inc.shape[1]
    half = window // 2
    # pooled moments via prefix sums over the increment axis
    s1 = np.concatenate([[0.0], np.cumsum(inc.sum(axis=0))])
    s2 = np.concatenate([[0.0], np.cumsum((inc * inc).sum(axis=0))])
    out = np.empty(points.size)
    for j in range(points.size):
        lo, hi = max(0, j - half), min(n_inc, j + half + 1)
        count = (hi - lo) * inc.shape[0]
        mean = (s1[hi] - s1[lo]) / count
        var = max((s2[hi] - s2[lo]) / count - mean * mean, 0.0)
        out[j] = np.sqrt(var)
    return out


def ensemble_volatility(ensemble: PathEnsemble, model: MarketModel,
                        window: int = DEFAULT_VOV_WINDOW) -> VolDiagnostics:
    vols = ensemble_vol_paths(ensemble, model)
    return VolDiagnostics(
        t_grid=ensemble.grid,
        mean_vol=vols.mean(axis=0),
        vol_of_vol=rolling_vol_of_vol(vols, ensemble.grid.points, window),
        n_paths=len(ensemble),
    )


def sample_skewness(values: np.ndarray, axis: int = 0, floor: float = 1e-28) -> np.ndarray:
    """Biased (moment-ratio) skewness; NaN where the second moment is below ``floor``."""
    values = np.asarray(values, dtype=float)
    dev = values - values.mean(axis=axis, keepdims=True)
    m2 = np.mean(dev**2, axis=axis)
    m3 = np.mean(dev**3, axis=axis)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(m2 > floor, m3 / np.maximum(m2, floor) ** 1.5, np.nan)


def conditional_skewness(prices: np.ndarray, cash: np.ndarray, condition_cash: float) -> np.ndarray:
    mask = np.asarray(cash) == condition_cash
    n = int(mask.sum())
    if n < MIN_CONDITIONAL_PATHS:
        raise TooFewPaths(f"{n} paths realise X_T = {condition_cash}; need {MIN_CONDITIONAL_PATHS}")
    skew = sample_skewness(prices[mask], axis=0)
    if np.all(np.isnan(skew)):
        raise DegenerateSample("conditional price distribution has zero variance at every time")
    return skew


def skewness_process(ensemble: PathEnsemble, model: MarketModel, condition_cash: float) -> np.ndarray:
    """Pointwise skewness of prices over paths whose realised ``X_T`` is ``condition_cash``.

    Times with a zero-variance cross-section (e.g. ``t = 0``) yield NaN.
    """
    return conditional_skewness(ensemble_prices(ensemble, model), ensemble.cash, condition_cash)
