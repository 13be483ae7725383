"""scikit-learn compatible wrappers around the combining routines.

Every estimator takes a 2-D ``X`` whose columns are competing estimates (or
forecasts) of the same target, and predicts the combined value ``X @ w``
(plus an intercept where one was fitted).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import (
    CovarianceSpec,
    TriangulationParams,
    blue_variance,
    blue_weights,
    combination_variance,
    generalized_weights,
)
from .exceptions import ValidationError
from .forecast import (
    CombineOptions,
    ForecastPanel,
    combining_regression,
    estimate_vc_weight,
    valuation_regression,
)


def _check_n_columns(X, expected, name):
    if X.shape[1] != expected:
        raise ValidationError(f"{name} expects {expected} columns, got {X.shape[1]}", field="X")


class _CombinerMixin(RegressorMixin):
    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.coef_.shape[0]:
            raise ValidationError(
                f"X has {X.shape[1]} columns, the combiner was fitted with {self.coef_.shape[0]}",
                field="X",
            )
        return X @ self.coef_ + getattr(self, "intercept_", 0.0)


class TriangulationCombiner(_CombinerMixin, BaseEstimator):
    """Combine ``(price, intrinsic, comparables)`` columns with the optimal weights
    for a known noise model.

    ``fit`` ignores its data beyond shape checks; the weights depend on the
    noise parameters only.
    """

    def __init__(self, sigma_p=1.0, sigma_i=1.0, sigma_c=1.0, rho=0.0, rho_i=0.0):
        self.sigma_p = sigma_p
        self.sigma_i = sigma_i
        self.sigma_c = sigma_c
        self.rho = rho
        self.rho_i = rho_i

    def fit(self, X=None, y=None):
        if X is not None:
            X = check_array(X)
            _check_n_columns(X, 3, type(self).__name__)
        params = TriangulationParams(self.sigma_p, self.sigma_i, self.sigma_c, self.rho, self.rho_i)
        self.weights_ = generalized_weights(params)
        self.coef_ = self.weights_.as_array()
        self.variance_ = combination_variance(self.weights_, params)
        self.n_features_in_ = 3
        return self


class MinimumVarianceCombiner(_CombinerMixin, BaseEstimator):
    """Estimate the error covariance from ``X - y`` and apply minimum-variance weights.

    Parameters
    ----------
    centered : bool
        Subtract each column's mean error before forming the covariance.
        The default treats the estimates as unbiased (uncentered moments).
    """

    def __init__(self, centered=False):
        self.centered = centered

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        errors = X - y[:, None]
        if self.centered:
            errors = errors - errors.mean(axis=0)
        cov = errors.T @ errors / errors.shape[0]
        labels = tuple(f"x{i}" for i in range(X.shape[1]))
        self.covariance_ = CovarianceSpec(labels, (cov + cov.T) / 2).matrix
        self.coef_ = blue_weights(self.covariance_)
        self.variance_ = blue_variance(self.coef_, self.covariance_)
        self.n_features_in_ = X.shape[1]
        return self


class BatesGrangerCombiner(_CombinerMixin, BaseEstimator):
    """Two-forecast variance-covariance combination with an estimated weight."""

    def __init__(self, centered=False):
        self.centered = centered

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        _check_n_columns(X, 2, type(self).__name__)
        errors = X - y[:, None]
        self.weight_ = estimate_vc_weight(errors[:, 0], errors[:, 1], centered=self.centered)
        self.coef_ = np.array([self.weight_, 1.0 - self.weight_])
        self.n_features_in_ = 2
        return self


class CombiningRegressor(_CombinerMixin, BaseEstimator):
    """Granger-Ramanathan combining regression of realizations on forecasts.

    Parameters
    ----------
    fit_intercept : bool
    constrain_sum_to_one : bool
        Force the forecast weights to sum to one.
    shrink_lambda : float or None
        Pull the fitted weights toward ``prior_weights`` by this fraction.
    prior_weights : sequence or None
        Shrinkage target; equal weights when omitted.
    """

    def __init__(self, fit_intercept=False, constrain_sum_to_one=True, shrink_lambda=None, prior_weights=None):
        self.fit_intercept = fit_intercept
        self.constrain_sum_to_one = constrain_sum_to_one
        self.shrink_lambda = shrink_lambda
        self.prior_weights = prior_weights

    def _options(self):
        return CombineOptions(
            include_intercept=self.fit_intercept,
            constrain_sum_to_one=self.constrain_sum_to_one,
            shrink_lambda=self.shrink_lambda,
            prior_weights=None if self.prior_weights is None else tuple(self.prior_weights),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        names = tuple(f"x{i}" for i in range(X.shape[1]))
        fit = combining_regression(ForecastPanel(y, X, names), self._options())
        self.coef_ = fit.weights
        self.intercept_ = fit.intercept
        self.residual_ss_ = fit.residual_ss
        self.n_features_in_ = X.shape[1]
        return self


class ValuationRegressor(_CombinerMixin, BaseEstimator):
    """Regress next-period price on ``(price, net_asset, cap_earnings)`` columns."""

    def __init__(self, fit_intercept=False, constrain_sum_to_one=False, bias_threshold=0.02):
        self.fit_intercept = fit_intercept
        self.constrain_sum_to_one = constrain_sum_to_one
        self.bias_threshold = bias_threshold

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        _check_n_columns(X, 3, type(self).__name__)
        opts = CombineOptions(include_intercept=self.fit_intercept, constrain_sum_to_one=self.constrain_sum_to_one)
        self.result_ = valuation_regression(y, X[:, 0], X[:, 1], X[:, 2], opts, self.bias_threshold)
        self.coef_ = np.array(list(self.result_.coefficients.values()))
        self.intercept_ = self.result_.intercept
        self.coef_sum_ = self.result_.coef_sum
        self.biased_ = self.result_.biased
        self.n_features_in_ = 3
        return self
