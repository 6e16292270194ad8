"""Rate fitting and inequality-ratio reports for diagnostic time series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .validation import check_series, check_window

MIN_POINTS = 5


@dataclass(frozen=True)
class FitResult:
    """Least-squares line through (log t, log value)."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "t_min": self.window[0],
            "t_max": self.window[1],
        }


def _xy(X, y=None):
    X = np.asarray(X, dtype=float)
    if y is None:
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError("a series is an (m, 2) array of (t, value) rows")
        return check_series(X[:, 0], X[:, 1])
    return check_series(X.reshape(-1), np.asarray(y, dtype=float).reshape(-1))


def _r_squared(y, pred):
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    floor = 1e-24 * max(1.0, float(np.sum(y * y)))
    if ss_tot <= floor:
        # constant data: perfect unless the fit itself is off
        return 1.0 if ss_res <= floor else 0.0
    return float(min(1.0, max(0.0, 1.0 - ss_res / ss_tot)))


class DecayRateRegressor(RegressorMixin, BaseEstimator):
    """Power-law fit value ~ C t^slope by least squares in log-log coordinates.

    ``X`` holds times (shape (m,) or (m, 1)); ``y`` strictly positive values.
    """

    def __init__(self, window=None):
        self.window = window

    def fit(self, X, y):
        t, v = _xy(X, y)
        if self.window is not None:
            a, b = check_window(self.window)
            keep = (t >= a - 1e-12) & (t <= b + 1e-12)
            t, v = t[keep], v[keep]
        if t.size < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} points in the window, got {t.size}")
        if np.any(t <= 0):
            raise ValueError("times must be positive for a log-log fit")
        if np.any(v <= 0):
            raise ValueError("values must be positive for a log-log fit")
        lt, lv = np.log(t), np.log(v)
        slope, intercept = np.polyfit(lt, lv, 1)
        self.slope_ = float(slope)
        self.intercept_ = float(intercept)
        self.r_squared_ = _r_squared(lv, slope * lt + intercept)
        self.window_ = (float(t.min()), float(t.max()))
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        t = np.asarray(X, dtype=float).reshape(-1)
        return np.exp(self.intercept_) * t**self.slope_

    def result(self) -> FitResult:
        check_is_fitted(self, "slope_")
        return FitResult(self.slope_, self.intercept_, self.r_squared_, self.window_)


class LogGrowthRegressor(RegressorMixin, BaseEstimator):
    """Fit value = c0 + c1 log(1 + t).

    ``residual_fraction_`` is the largest absolute residual divided by the
    range of the data (0 for a constant series fitted exactly).
    """

    def fit(self, X, y):
        t, v = _xy(X, y)
        if t.size < 3:
            raise ValueError("need at least 3 points")
        if np.any(t <= -1):
            raise ValueError("times must exceed -1")
        basis = np.column_stack([np.ones_like(t), np.log1p(t)])
        coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
        self.coef_ = coef
        resid = v - basis @ coef
        span = float(np.max(v) - np.min(v))
        peak = float(np.max(np.abs(resid)))
        if peak <= 1e-12 * max(1.0, float(np.max(np.abs(v)))):
            peak = 0.0
        self.residual_fraction_ = peak / span if span > 0 else (0.0 if peak == 0 else np.inf)
        self.r_squared_ = _r_squared(v, basis @ coef)
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        t = np.asarray(X, dtype=float).reshape(-1)
        return self.coef_[0] + self.coef_[1] * np.log1p(t)


def fit_decay_exponent(series, window) -> FitResult:
    """Power-law exponent of a (t, value) series over ``window = (a, b)``."""
    t, v = _xy(series)
    return DecayRateRegressor(window=window).fit(t, v).result()


def fit_log_growth(series) -> LogGrowthRegressor:
    t, v = _xy(series)
    return LogGrowthRegressor().fit(t, v)


@dataclass(frozen=True)
class RatioReport:
    """Empirical constant in lhs <= C rhs."""

    sup: float
    mean: float
    drift: float | None
    stable: bool | None

    def as_dict(self) -> dict:
        return {"sup": self.sup, "mean": self.mean, "drift": self.drift, "stable": self.stable}


def _ratios(lhs, rhs):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
    if np.any(rhs < 0):
        raise ValueError("right-hand sides must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(lhs == 0, 0.0, lhs / rhs)
    return r


def ratio_report(lhs, rhs, refined_lhs=None, refined_rhs=None, tol: float = 0.1) -> RatioReport:
    """sup and mean of lhs/rhs; with a refined run, the relative drift of the sup."""
    r = _ratios(lhs, rhs)
    sup = float(np.max(r)) if r.size else 0.0
    mean = float(np.mean(r)) if r.size else 0.0
    if refined_lhs is None:
        return RatioReport(sup, mean, None, None)
    r2 = _ratios(refined_lhs, rhs if refined_rhs is None else refined_rhs)
    sup2 = float(np.max(r2)) if r2.size else 0.0
    scale = max(abs(sup), abs(sup2))
    drift = abs(sup2 - sup) / scale if scale > 0 else 0.0
    return RatioReport(sup, mean, drift, drift < tol)
