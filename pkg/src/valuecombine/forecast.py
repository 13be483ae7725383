"""Forecast-combination estimators.

Variance-covariance (Bates-Granger) weights, Granger-Ramanathan combining
regressions, rolling re-estimation, shrinkage toward a prior, and the
valuation regression of next-period price on current value estimates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import (
    DegenerateDenominator,
    LambdaOutOfRange,
    LengthMismatch,
    RankDeficient,
    TooFewRows,
    ValidationError,
    ValueCombineError,
)

DEGENERATE_RTOL = 1e-12
RANK_RTOL = 1e-10


class WeightOutsideUnitInterval(UserWarning):
    """An estimated two-forecast weight fell outside [0, 1]."""


@dataclass
class ForecastPanel:
    realizations: np.ndarray
    forecasts: np.ndarray
    names: tuple[str, ...]
    index: pd.Index | None = None
    horizon_label: str = ""

    def __post_init__(self):
        y = np.asarray(self.realizations, dtype=float).ravel()
        f = np.asarray(self.forecasts, dtype=float)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2 or f.shape[0] != y.shape[0]:
            raise LengthMismatch(
                f"forecasts have {f.shape[0]} rows but realizations have {y.shape[0]}",
                field="forecasts",
            )
        if y.shape[0] < 2:
            raise TooFewRows("a panel needs at least 2 rows", field="realizations")
        if len(self.names) != f.shape[1]:
            raise ValidationError(
                f"{len(self.names)} names for {f.shape[1]} forecast columns", field="names"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
            raise ValidationError("panel contains missing or non-finite values", field="panel")
        self.realizations = y
        self.forecasts = f
        self.names = tuple(self.names)
        if self.index is None:
            self.index = pd.RangeIndex(len(y))

    def __len__(self):
        return self.realizations.shape[0]

    @property
    def n_forecasts(self) -> int:
        return self.forecasts.shape[1]

    def errors(self) -> np.ndarray:
        """Forecast errors ``forecast - realization`` per column."""
        return self.forecasts - self.realizations[:, None]

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, horizon_label: str = "") -> "ForecastPanel":
        """Build from a frame with ``realization`` and ``forecast_<name>`` columns."""
        if "realization" not in frame.columns:
            raise ValidationError("panel is missing the 'realization' column", field="realization")
        cols = [c for c in frame.columns if str(c).startswith("forecast_")]
        if not cols:
            raise ValidationError("panel has no 'forecast_<name>' columns", field="forecast_")
        return cls(
            realizations=frame["realization"].to_numpy(dtype=float),
            forecasts=frame[cols].to_numpy(dtype=float),
            names=tuple(str(c)[len("forecast_"):] for c in cols),
            index=frame.index,
            horizon_label=horizon_label,
        )

    @classmethod
    def read_csv(cls, path: str | Path, horizon_label: str = "") -> "ForecastPanel":
        frame = _read_dated_csv(path)
        return cls.from_frame(frame, horizon_label=horizon_label)


@dataclass(frozen=True)
class CombineOptions:
    include_intercept: bool = False
    constrain_sum_to_one: bool = True
    window: int | None = None
    shrink_lambda: float | None = None
    prior_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.window is not None and self.window < 1:
            raise ValidationError("window must be a positive integer", field="window")
        if self.shrink_lambda is not None and not 0.0 <= self.shrink_lambda <= 1.0:
            raise LambdaOutOfRange(
                f"shrink_lambda={self.shrink_lambda!r} must lie in [0, 1]", field="shrink_lambda"
            )
        if self.prior_weights is not None:
            total = float(np.sum(self.prior_weights))
            if abs(total - 1.0) > 1e-9:
                raise ValidationError(
                    f"prior_weights sum to {total!r}, not 1", field="prior_weights"
                )
            object.__setattr__(self, "prior_weights", tuple(float(w) for w in self.prior_weights))

    def check_window(self, n_forecasts: int, n_rows: int) -> None:
        if self.window is None:
            return
        minimum = n_forecasts + 2
        if self.window < minimum:
            raise ValidationError(
                f"window={self.window} is below the minimum {minimum} for {n_forecasts} forecasts",
                field="window",
            )
        if self.window > n_rows:
            raise ValidationError(
                f"window={self.window} exceeds the panel length {n_rows}", field="window"
            )


@dataclass(frozen=True)
class CombiningFit:
    weights: np.ndarray
    intercept: float
    residual_ss: float
    n_obs: int
    constrained: bool
    shrunk: bool = False

    @property
    def weight_sum(self) -> float:
        return float(np.sum(self.weights))


# -- variance-covariance weights ---------------------------------------------


def vc_weight(var1: float, var2: float, cov12: float) -> float:
    """Weight on forecast 1 minimizing the combined error variance."""
    if var1 < 0 or var2 < 0:
        raise ValidationError("error variances must be >= 0", field="var1" if var1 < 0 else "var2")
    denom = var1 + var2 - 2.0 * cov12
    if denom <= DEGENERATE_RTOL * max(var1, var2, abs(cov12), 0.0) or denom <= 0.0:
        raise DegenerateDenominator(
            f"var1 + var2 - 2*cov12 = {denom!r}: the two forecast errors are indistinguishable",
            field="cov12",
        )
    return (var2 - cov12) / denom


def combined_variance(omega: float, var1: float, var2: float, cov12: float) -> float:
    return omega**2 * var1 + (1 - omega) ** 2 * var2 + 2 * omega * (1 - omega) * cov12


def estimate_vc_weight(errors1, errors2, centered: bool = False) -> float:
    """Sample version of :func:`vc_weight` from two error sequences.

    Moments are uncentered averages ``mean(e_i * e_j)`` unless ``centered``
    is set.  Estimates outside [0, 1] are returned unclipped with a
    :class:`WeightOutsideUnitInterval` warning.
    """
    e1 = np.asarray(errors1, dtype=float).ravel()
    e2 = np.asarray(errors2, dtype=float).ravel()
    if e1.shape != e2.shape:
        raise LengthMismatch(f"error sequences have lengths {e1.size} and {e2.size}", field="errors2")
    if e1.size < 2:
        raise TooFewRows("need at least 2 errors per forecast", field="errors1")
    if centered:
        e1 = e1 - e1.mean()
        e2 = e2 - e2.mean()
    s11 = float(np.mean(e1 * e1))
    s22 = float(np.mean(e2 * e2))
    s12 = float(np.mean(e1 * e2))
    omega = vc_weight(s11, s22, s12)
    if not 0.0 <= omega <= 1.0:
        warnings.warn(
            f"estimated weight {omega:.6g} lies outside [0, 1]", WeightOutsideUnitInterval, stacklevel=2
        )
    return omega


# -- combining regressions ------------------------------------------------------


def _design(forecasts: np.ndarray, include_intercept: bool) -> np.ndarray:
    if include_intercept:
        return np.column_stack([np.ones(forecasts.shape[0]), forecasts])
    return forecasts


def _check_rank(X: np.ndarray) -> None:
    sv = np.linalg.svd(X, compute_uv=False)
    if sv.size == 0 or sv[-1] <= RANK_RTOL * sv[0]:
        raise RankDeficient(
            "forecast columns are collinear (design matrix is rank deficient)", field="forecasts"
        )


def _constrained_lstsq(X: np.ndarray, y: np.ndarray, constraint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least squares subject to ``constraint @ beta == 1``.

    Returns the coefficients and the inverse of the bordered KKT matrix,
    whose top-left block is the unscaled covariance of the estimator.
    """
    p = X.shape[1]
    kkt = np.zeros((p + 1, p + 1))
    kkt[:p, :p] = X.T @ X
    kkt[:p, p] = constraint
    kkt[p, :p] = constraint
    rhs = np.concatenate([X.T @ y, [1.0]])
    try:
        kkt_inv = np.linalg.inv(kkt)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(f"constrained system is singular: {exc}", field="forecasts") from exc
    solution = kkt_inv @ rhs
    return solution[:p], kkt_inv


def _fit_arrays(y: np.ndarray, F: np.ndarray, include_intercept: bool, constrain: bool):
    n, k = F.shape
    X = _design(F, include_intercept)
    p = X.shape[1]
    if n < p + 2:
        raise TooFewRows(f"{n} rows for {p} coefficients; need at least {p + 2}", field="rows")
    if constrain and k == 1 and not include_intercept:
        beta = np.array([1.0])
        resid = y - F[:, 0]
        return beta, resid, None
    _check_rank(X)
    if constrain:
        a = np.ones(p)
        if include_intercept:
            a[0] = 0.0
        beta, kkt_inv = _constrained_lstsq(X, y, a)
        cov_unscaled = kkt_inv[:p, :p]
    else:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        cov_unscaled = np.linalg.inv(X.T @ X)
    return beta, y - X @ beta, cov_unscaled


def shrink_weights(ls_weights, prior_weights, lam: float) -> np.ndarray:
    """Convex combination ``lam * prior + (1 - lam) * ls``."""
    ls = np.asarray(ls_weights, dtype=float).ravel()
    prior = np.asarray(prior_weights, dtype=float).ravel()
    if ls.shape != prior.shape:
        raise LengthMismatch(
            f"weight vectors have lengths {ls.size} and {prior.size}", field="prior_weights"
        )
    if not (math.isfinite(lam) and 0.0 <= lam <= 1.0):
        raise LambdaOutOfRange(f"lambda={lam!r} must lie in [0, 1]", field="shrink_lambda")
    if lam == 0.0:
        return ls.copy()
    if lam == 1.0:
        return prior.copy()
    return lam * prior + (1.0 - lam) * ls


def combining_regression(panel: ForecastPanel, opts: CombineOptions | None = None) -> CombiningFit:
    """Regress realizations on forecasts.

    With ``constrain_sum_to_one`` the forecast weights are forced to sum to
    one (the intercept, if any, is unconstrained).  When ``shrink_lambda``
    is set the weights are pulled toward ``prior_weights`` (equal weights
    by default) after estimation.
    """
    opts = opts or CombineOptions()
    y, F = panel.realizations, panel.forecasts
    beta, resid, _ = _fit_arrays(y, F, opts.include_intercept, opts.constrain_sum_to_one)
    intercept = float(beta[0]) if opts.include_intercept else 0.0
    weights = beta[1:] if opts.include_intercept else beta
    shrunk = False
    if opts.shrink_lambda is not None:
        prior = opts.prior_weights or tuple([1.0 / F.shape[1]] * F.shape[1])
        weights = shrink_weights(weights, prior, opts.shrink_lambda)
        resid = y - intercept - F @ weights
        shrunk = True
    return CombiningFit(
        weights=np.asarray(weights, dtype=float),
        intercept=intercept,
        residual_ss=float(resid @ resid),
        n_obs=len(y),
        constrained=opts.constrain_sum_to_one,
        shrunk=shrunk,
    )


@dataclass
class RollingWeights:
    """Per-date weights; row ``t`` uses only rows ``t - window + 1 .. t``."""

    frame: pd.DataFrame
    failures: dict = field(default_factory=dict)

    @property
    def weights(self) -> pd.DataFrame:
        return self.frame.drop(columns=["intercept"], errors="ignore")


def rolling_weights(panel: ForecastPanel, opts: CombineOptions) -> RollingWeights:
    if opts.window is None:
        raise ValidationError("rolling_weights requires a window", field="window")
    opts.check_window(panel.n_forecasts, len(panel))
    window = opts.window
    columns = list(panel.names) + (["intercept"] if opts.include_intercept else [])
    rows, labels, failures = [], [], {}
    for end in range(window, len(panel) + 1):
        label = panel.index[end - 1]
        sub = ForecastPanel(
            panel.realizations[end - window:end],
            panel.forecasts[end - window:end],
            panel.names,
        )
        try:
            fit = combining_regression(sub, opts)
            row = list(fit.weights) + ([fit.intercept] if opts.include_intercept else [])
        except ValueCombineError as exc:
            failures[label] = f"{type(exc).__name__}: {exc}"
            row = [np.nan] * len(columns)
        rows.append(row)
        labels.append(label)
    frame = pd.DataFrame(rows, index=pd.Index(labels, name=panel.index.name), columns=columns)
    return RollingWeights(frame, failures)


# -- valuation regression -----------------------------------------------------


VALUATION_TERMS = ("price", "net_asset", "cap_earnings")


@dataclass(frozen=True)
class ValuationFit:
    coefficients: dict
    standard_errors: dict
    intercept: float
    coef_sum: float
    biased: bool
    bias_threshold: float
    residual_ss: float
    n_obs: int
    constrained: bool


def valuation_regression(
    prices_next,
    prices,
    net_assets,
    cap_earnings,
    opts: CombineOptions | None = None,
    bias_threshold: float = 0.02,
) -> ValuationFit:
    """Regress next-period (discounted) price on price, net assets and capitalized earnings.

    ``prices_next`` is taken as already cum-dividend and discounted.  The
    coefficient sum is compared against one; a gap beyond
    ``bias_threshold`` flags systematic bias in at least one estimate.
    Default options fit the unconstrained regression.
    """
    opts = opts or CombineOptions(constrain_sum_to_one=False)
    cols = [np.asarray(c, dtype=float).ravel() for c in (prices_next, prices, net_assets, cap_earnings)]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise LengthMismatch("all valuation series must have equal length", field="rows")
    if n < 5:
        raise TooFewRows(f"{n} rows; the valuation regression needs at least 5", field="rows")
    if not all(np.all(np.isfinite(c)) for c in cols):
        raise ValidationError("valuation series contain missing or non-finite values", field="rows")
    y = cols[0]
    F = np.column_stack(cols[1:])
    beta, resid, cov_unscaled = _fit_arrays(y, F, opts.include_intercept, opts.constrain_sum_to_one)
    p = beta.size
    dof = n - p + (1 if opts.constrain_sum_to_one else 0)
    s2 = float(resid @ resid) / dof if dof > 0 else float("nan")
    se = np.sqrt(np.clip(np.diag(cov_unscaled) * s2, 0.0, None))
    offset = 1 if opts.include_intercept else 0
    coefs = {name: float(beta[offset + i]) for i, name in enumerate(VALUATION_TERMS)}
    ses = {name: float(se[offset + i]) for i, name in enumerate(VALUATION_TERMS)}
    coef_sum = float(sum(coefs.values()))
    return ValuationFit(
        coefficients=coefs,
        standard_errors=ses,
        intercept=float(beta[0]) if opts.include_intercept else 0.0,
        coef_sum=coef_sum,
        biased=abs(coef_sum - 1.0) > bias_threshold,
        bias_threshold=bias_threshold,
        residual_ss=float(resid @ resid),
        n_obs=n,
        constrained=opts.constrain_sum_to_one,
    )


def rolling_valuation_regression(
    frame: pd.DataFrame,
    window: int,
    opts: CombineOptions | None = None,
    bias_threshold: float = 0.02,
) -> RollingWeights:
    """Valuation regression re-estimated over trailing windows of ``frame``."""
    if window < len(VALUATION_TERMS) + 2:
        raise ValidationError(f"window={window} is below the minimum 5", field="window")
    if window > len(frame):
        raise ValidationError(f"window={window} exceeds the panel length {len(frame)}", field="window")
    rows, labels, failures = [], [], {}
    columns = ["a_price", "a_net_asset", "a_cap_earnings", "coef_sum"]
    for end in range(window, len(frame) + 1):
        sub = frame.iloc[end - window:end]
        label = frame.index[end - 1]
        try:
            fit = valuation_regression(
                sub["price_next"], sub["price"], sub["net_asset"], sub["cap_earnings"],
                opts, bias_threshold,
            )
            rows.append(list(fit.coefficients.values()) + [fit.coef_sum])
        except ValueCombineError as exc:
            failures[label] = f"{type(exc).__name__}: {exc}"
            rows.append([np.nan] * len(columns))
        labels.append(label)
    return RollingWeights(pd.DataFrame(rows, index=pd.Index(labels, name=frame.index.name), columns=columns), failures)


VALUATION_COLUMNS = ("price_next", "price", "net_asset", "cap_earnings")


def read_valuation_csv(path: str | Path) -> pd.DataFrame:
    frame = _read_dated_csv(path)
    missing = [c for c in VALUATION_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}", field="header")
    return frame[list(VALUATION_COLUMNS)].astype(float)


def _read_dated_csv(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path, encoding="utf-8")
    if "date" not in frame.columns:
        raise ValidationError(f"{path}: missing 'date' column", field="date")
    try:
        frame["date"] = pd.to_datetime(frame["date"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{path}: unparseable date column: {exc}", field="date") from exc
    return frame.set_index("date")
