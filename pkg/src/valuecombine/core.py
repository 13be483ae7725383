"""Minimum-variance triangulation of price, intrinsic and comparables values.

Error model: ``V = P + e``, ``V_I = V + e_I``, ``V_C = V + e_C`` with
``sd(e) = sigma_p``, ``sd(e_I) = sigma_i``, ``sd(e_C) = sigma_c``,
``corr(e, e_C) = rho``, ``corr(e, e_I) = rho_i`` and ``corr(e_I, e_C) = 0``.

All covariance matrices in this module describe deviations
``estimate - V``.  For the price that deviation is ``-e``, so the
price/comparables entry is ``-rho * sigma_p * sigma_c`` (and likewise for
the price/intrinsic entry).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import (
    InvalidParam,
    InvalidWeights,
    SingularCovariance,
    ValidationError,
    ZeroDenominator,
)

WEIGHT_SUM_TOL = 1e-12
SYMMETRY_TOL = 1e-12
PSD_RTOL = 1e-10


@dataclass(frozen=True)
class TriangulationParams:
    sigma_p: float
    sigma_i: float
    sigma_c: float
    rho: float
    rho_i: float = 0.0

    def __post_init__(self):
        for name in ("sigma_p", "sigma_i", "sigma_c"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidParam(f"{name} must be finite and >= 0, got {value!r}", field=name)
        for name in ("rho", "rho_i"):
            value = getattr(self, name)
            if not math.isfinite(value) or not -1.0 <= value <= 1.0:
                raise InvalidParam(f"{name} must lie in [-1, 1], got {value!r}", field=name)

    @property
    def sigmas(self) -> tuple[float, float, float]:
        return (self.sigma_p, self.sigma_i, self.sigma_c)

    def covariance(self) -> np.ndarray:
        """3x3 covariance of (P - V, V_I - V, V_C - V)."""
        s, si, sc = self.sigmas
        return np.array(
            [
                [s * s, -self.rho_i * s * si, -self.rho * s * sc],
                [-self.rho_i * s * si, si * si, 0.0],
                [-self.rho * s * sc, 0.0, sc * sc],
            ]
        )


@dataclass(frozen=True)
class Weights:
    w_price: float
    w_intrinsic: float
    w_comparables: float

    def __post_init__(self):
        total = self.w_price + self.w_intrinsic + self.w_comparables
        if not all(math.isfinite(w) for w in self.as_tuple()):
            raise InvalidWeights("weights must be finite", field="weights")
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidWeights(f"weights must sum to 1, got {total!r}", field="weights")

    @classmethod
    def from_kappas(cls, kappa_i: float, kappa_c: float) -> "Weights":
        return cls(1.0 - kappa_i - kappa_c, kappa_i, kappa_c)

    @property
    def kappa_i(self) -> float:
        return self.w_intrinsic

    @property
    def kappa_c(self) -> float:
        return self.w_comparables

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.w_price, self.w_intrinsic, self.w_comparables)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())


@dataclass(frozen=True)
class EstimateTriple:
    price: float
    intrinsic: float
    comparables: float

    def __post_init__(self):
        for name in ("price", "intrinsic", "comparables"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite", field=name)

    def as_array(self) -> np.ndarray:
        return np.array([self.price, self.intrinsic, self.comparables])


@dataclass(frozen=True)
class CombinedValue:
    value: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class CovarianceSpec:
    labels: tuple[str, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValidationError("covariance matrix must be square", field="matrix")
        if len(self.labels) != matrix.shape[0]:
            raise ValidationError(
                f"{len(self.labels)} labels for a {matrix.shape[0]}x{matrix.shape[0]} matrix",
                field="labels",
            )
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("covariance matrix must be finite", field="matrix")
        scale = max(float(np.max(np.abs(matrix))), 1.0) if matrix.size else 1.0
        if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOL * scale:
            raise ValidationError("covariance matrix must be symmetric", field="matrix")
        diag = np.diag(matrix)
        if np.any(diag < 0):
            raise ValidationError("covariance diagonal must be >= 0", field="matrix")
        if matrix.size:
            eig = np.linalg.eigvalsh(matrix)
            if eig[0] < -PSD_RTOL * max(float(diag.max()), 0.0):
                raise ValidationError(
                    f"covariance matrix is not positive semidefinite (min eigenvalue {eig[0]:.3g})",
                    field="matrix",
                )
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_params(cls, params: TriangulationParams) -> "CovarianceSpec":
        return cls(("price", "intrinsic", "comparables"), params.covariance())


def _zero_sigma_weights(params: TriangulationParams) -> Weights | None:
    zeros = [i for i, s in enumerate(params.sigmas) if s == 0.0]
    if len(zeros) > 1:
        raise ZeroDenominator(
            "at most one sigma may be exactly zero",
            field=",".join(("sigma_p", "sigma_i", "sigma_c")[i] for i in zeros),
        )
    if not zeros:
        return None
    unit = [0.0, 0.0, 0.0]
    unit[zeros[0]] = 1.0
    return Weights(*unit)


def _from_parts(num_p: float, num_i: float, num_c: float, denom: float) -> Weights:
    if not denom > 0.0 or not math.isfinite(denom):
        raise ZeroDenominator(f"weight denominator is {denom!r}", field="params")
    kappa_i = num_i / denom
    kappa_c = num_c / denom
    # the price weight is taken as the complement so the sum is exact;
    # num_p is kept for the consistency check below
    w_price = 1.0 - kappa_i - kappa_c
    if abs(w_price - num_p / denom) > 1e-9 * max(1.0, abs(kappa_i), abs(kappa_c)):
        raise ZeroDenominator(
            "weight numerators are inconsistent; denominator is ill-conditioned", field="params"
        )
    return Weights(w_price, kappa_i, kappa_c)


def theorem1_weights(params: TriangulationParams) -> Weights:
    """Optimal weights when the intrinsic error is uncorrelated with market noise.

    ``params.rho_i`` must be zero; use :func:`generalized_weights` otherwise.
    """
    if params.rho_i != 0.0:
        raise InvalidParam("theorem1_weights requires rho_i == 0", field="rho_i")
    degenerate = _zero_sigma_weights(params)
    if degenerate is not None:
        return degenerate
    s, si, sc = params.sigmas
    rho = params.rho
    denom = (1 - rho**2) * s**2 * sc**2 + (s**2 + sc**2 + 2 * rho * s * sc) * si**2
    return _from_parts(
        (sc + rho * s) * si**2 * sc,
        (1 - rho**2) * s**2 * sc**2,
        (s + rho * sc) * s * si**2,
        denom,
    )


def generalized_weights(params: TriangulationParams) -> Weights:
    """Optimal weights allowing ``corr(e_I, e) = rho_i``."""
    degenerate = _zero_sigma_weights(params)
    if degenerate is not None:
        return degenerate
    s, si, sc = params.sigmas
    rho, ri = params.rho, params.rho_i
    denom = (
        (1 - rho**2) * s**2 * sc**2
        + 2 * (rho * s + sc) * ri * s * sc * si
        + ((1 - ri**2) * s**2 + 2 * rho * s * sc + sc**2) * si**2
    )
    return _from_parts(
        ((sc + rho * s) * si + ri * s * sc) * si * sc,
        ((1 - rho**2) * s * sc + (rho * s + sc) * ri * si) * s * sc,
        ((1 - ri**2) * s * si + (ri * s + si) * rho * sc) * s * si,
        denom,
    )


def combination_variance(weights: Weights, params: TriangulationParams) -> float:
    """Variance of the combined estimate's deviation from V.

    Expanded form of the quadratic ``w' Sigma w``; the last term is the
    price/intrinsic cross term that vanishes when ``rho_i == 0``.
    """
    wp, ki, kc = weights.as_tuple()
    s, si, sc = params.sigmas
    var = (
        wp**2 * s**2
        + ki**2 * si**2
        + kc**2 * sc**2
        - 2 * wp * kc * params.rho * s * sc
        - 2 * wp * ki * params.rho_i * s * si
    )
    return max(var, 0.0)


def combine(triple: EstimateTriple, weights: Weights, params: TriangulationParams) -> CombinedValue:
    total = sum(weights.as_tuple())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidWeights(f"weights must sum to 1, got {total!r}", field="weights")
    value = float(np.dot(weights.as_array(), triple.as_array()))
    return CombinedValue(value, combination_variance(weights, params))


def triangulate(triple: EstimateTriple, params: TriangulationParams) -> tuple[Weights, CombinedValue]:
    """Optimal weights and the resulting combined value in one call."""
    weights = generalized_weights(params)
    return weights, combine(triple, weights, params)


def blue_weights(spec: CovarianceSpec | np.ndarray) -> np.ndarray:
    """Weights minimizing ``w' Sigma w`` subject to ``sum(w) == 1``.

    Solves the bordered stationarity system of the Lagrangian::

        [ 2 Sigma  1 ] [ w      ]   [ 0 ]
        [ 1'       0 ] [ lambda ] = [ 1 ]
    """
    matrix = spec.matrix if isinstance(spec, CovarianceSpec) else np.asarray(spec, dtype=float)
    n = matrix.shape[0]
    if n == 0:
        raise ValidationError("empty covariance matrix", field="matrix")
    eig = np.linalg.eigvalsh(matrix)
    scale = float(np.max(np.diag(matrix)))
    if scale <= 0 or eig[0] <= PSD_RTOL * scale:
        raise SingularCovariance(
            f"covariance matrix is not positive definite (min eigenvalue {eig[0]:.3g})",
            field="matrix",
        )
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * matrix
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    try:
        solution = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc), field="matrix") from exc
    return solution[:n]


def blue_variance(weights: Sequence[float], spec: CovarianceSpec | np.ndarray) -> float:
    matrix = spec.matrix if isinstance(spec, CovarianceSpec) else np.asarray(spec, dtype=float)
    w = np.asarray(weights, dtype=float)
    return float(max(w @ matrix @ w, 0.0))
