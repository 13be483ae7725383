"""Monte Carlo generator for the three-estimate error model, plus a brute-force
oracle for the optimal weights.

Draws use ``numpy.random.default_rng(seed)`` (PCG64) and
``Generator.standard_normal``; correlated errors come from a lower
triangular factor ``L`` of the correlation matrix of ``(e, e_I, e_C)``::

    z ~ N(0, I_3),  (e, e_I, e_C) = (L @ z) * (sigma_p, sigma_i, sigma_c)
    P = V - e,  V_I = V + e_I,  V_C = V + e_C
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .core import TriangulationParams, Weights
from .exceptions import EmptySample, InvalidWeights, NotPSD, ValidationError

PSD_TOL = 1e-12
SAMPLE_COLUMNS = ("v", "price", "v_i", "v_c")


@dataclass(frozen=True)
class SimConfig:
    params: TriangulationParams
    true_value: float | np.ndarray = 100.0
    n: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValidationError("n must be >= 1", field="n")
        tv = np.asarray(self.true_value, dtype=float)
        if tv.ndim > 1 or (tv.ndim == 1 and tv.size != self.n):
            raise ValidationError("true_value must be a scalar or have length n", field="true_value")
        if not np.all(np.isfinite(tv)):
            raise ValidationError("true_value must be finite", field="true_value")
        correlation_factor(self.params)


def correlation_matrix(params: TriangulationParams) -> np.ndarray:
    """Correlation matrix of ``(e, e_I, e_C)``; ``corr(e_I, e_C)`` is fixed at 0."""
    return np.array(
        [
            [1.0, params.rho_i, params.rho],
            [params.rho_i, 1.0, 0.0],
            [params.rho, 0.0, 1.0],
        ]
    )


def _semidefinite_cholesky(a: np.ndarray) -> np.ndarray:
    """Lower triangular ``L`` with ``L @ L.T == a`` for PSD ``a``.

    Zero pivots (singular but valid matrices, e.g. ``rho == 1``) yield a
    zero column instead of failing as ``numpy.linalg.cholesky`` would.
    """
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if pivot < -PSD_TOL:
            raise NotPSD(f"negative pivot {pivot:.3g} at column {j}", field="rho,rho_i")
        if pivot <= PSD_TOL:
            continue
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (a[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def correlation_factor(params: TriangulationParams) -> np.ndarray:
    corr = correlation_matrix(params)
    min_eig = float(np.linalg.eigvalsh(corr)[0])
    if min_eig < -PSD_TOL:
        raise NotPSD(
            f"(rho={params.rho}, rho_i={params.rho_i}) give an invalid correlation matrix "
            f"(min eigenvalue {min_eig:.4g}); need rho**2 + rho_i**2 <= 1",
            field="rho,rho_i",
        )
    return _semidefinite_cholesky(corr)


def _draw(config: SimConfig, rng: np.random.Generator, n: int, true_value) -> np.ndarray:
    L = correlation_factor(config.params)
    z = rng.standard_normal((n, 3))
    errors = (z @ L.T) * np.asarray(config.params.sigmas)
    v = np.broadcast_to(np.asarray(true_value, dtype=float), (n,))
    out = np.empty((n, 4))
    out[:, 0] = v
    out[:, 1] = v - errors[:, 0]
    out[:, 2] = v + errors[:, 1]
    out[:, 3] = v + errors[:, 2]
    return out


def generate(config: SimConfig, partitions: int = 1, max_workers: int | None = None) -> pd.DataFrame:
    """Draw ``config.n`` rows of ``(v, price, v_i, v_c)``.

    With ``partitions > 1`` the draws are split into contiguous ranges, each
    with its own child seed spawned from ``config.seed``; the result depends
    on ``(seed, partitions)`` only, not on ``max_workers``.
    """
    if partitions < 1:
        raise ValidationError("partitions must be >= 1", field="partitions")
    n = int(config.n)
    tv = np.asarray(config.true_value, dtype=float)
    if partitions == 1:
        data = _draw(config, np.random.default_rng(config.seed), n, tv)
    else:
        bounds = np.linspace(0, n, partitions + 1).astype(int)
        children = np.random.SeedSequence(config.seed).spawn(partitions)

        def run(k):
            lo, hi = bounds[k], bounds[k + 1]
            part_tv = tv if tv.ndim == 0 else tv[lo:hi]
            return _draw(config, np.random.default_rng(children[k]), hi - lo, part_tv)

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            data = np.vstack(list(pool.map(run, range(partitions))))
    return pd.DataFrame(data, columns=list(SAMPLE_COLUMNS))


def _weight_vector(weights: Weights | Sequence[float]) -> np.ndarray:
    w = weights.as_array() if isinstance(weights, Weights) else np.asarray(weights, dtype=float)
    if w.shape != (3,):
        raise InvalidWeights("expected three weights (price, intrinsic, comparables)", field="weights")
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidWeights(f"weights sum to {w.sum()!r}, not 1", field="weights")
    return w


def combined_deviation(samples: pd.DataFrame | np.ndarray, weights: Weights | Sequence[float]) -> np.ndarray:
    """Per-draw ``V_hat - V`` for the given weights."""
    data = samples.to_numpy() if isinstance(samples, pd.DataFrame) else np.asarray(samples, dtype=float)
    if data.shape[0] == 0:
        raise EmptySample("no samples", field="samples")
    w = _weight_vector(weights)
    return data[:, 1:4] @ w - data[:, 0]


def empirical_variance(samples: pd.DataFrame | np.ndarray, weights: Weights | Sequence[float]) -> float:
    """Sample variance (n - 1 divisor) of the combined estimate's deviation from V."""
    dev = combined_deviation(samples, weights)
    if dev.size < 2:
        raise EmptySample("need at least 2 samples for a variance", field="samples")
    return float(np.var(dev, ddof=1))


def write_samples(samples: pd.DataFrame, path) -> None:
    samples.to_csv(path, index=False, columns=list(SAMPLE_COLUMNS), float_format="%.12g")


# -- brute-force oracle ---------------------------------------------------------


def _variance_surface(params: TriangulationParams, kappa_i, kappa_c):
    """Variance of ``V_hat - V`` written out term by term from the error model."""
    s, si, sc = params.sigmas
    wp = 1.0 - kappa_i - kappa_c
    return (
        wp**2 * s**2
        + kappa_i**2 * si**2
        + kappa_c**2 * sc**2
        - 2.0 * wp * kappa_c * params.rho * s * sc
        - 2.0 * wp * kappa_i * params.rho_i * s * si
    )


def oracle_min_weights(
    params: TriangulationParams,
    resolution: float = 0.01,
    refine_steps: int = 3,
    fd_step: float = 0.05,
) -> Weights:
    """Grid search over ``(kappa_i, kappa_c) in [-1, 2]^2`` then local refinement.

    Refinement takes Newton steps with central finite-difference gradient
    and Hessian of the variance surface.  The surface is quadratic, so the
    differences carry no truncation error and a relatively large
    ``fd_step`` keeps rounding error small.
    """
    if not resolution > 0:
        raise ValidationError("resolution must be > 0", field="resolution")
    grid = np.arange(-1.0, 2.0 + resolution / 2, resolution)
    ki, kc = np.meshgrid(grid, grid, indexing="ij")
    surface = _variance_surface(params, ki, kc)
    idx = np.unravel_index(np.argmin(surface), surface.shape)
    x = np.array([grid[idx[0]], grid[idx[1]]])

    h = fd_step
    f = lambda p: _variance_surface(params, p[0], p[1])  # noqa: E731
    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    for _ in range(refine_steps):
        f0 = f(x)
        g = np.array([(f(x + e1) - f(x - e1)) / (2 * h), (f(x + e2) - f(x - e2)) / (2 * h)])
        h11 = (f(x + e1) - 2 * f0 + f(x - e1)) / h**2
        h22 = (f(x + e2) - 2 * f0 + f(x - e2)) / h**2
        h12 = (f(x + e1 + e2) - f(x + e1 - e2) - f(x - e1 + e2) + f(x - e1 - e2)) / (4 * h**2)
        hess = np.array([[h11, h12], [h12, h22]])
        if np.linalg.det(hess) <= 0 or h11 <= 0:
            break
        step = np.linalg.solve(hess, g)
        x = x - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return Weights.from_kappas(float(x[0]), float(x[1]))


def random_simplex_weights(rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` weight vectors drawn uniformly from the probability simplex."""
    return rng.dirichlet(np.ones(3), size=count)


@dataclass(frozen=True)
class OptimalityReport:
    analytic_variance: float
    empirical_variance: float
    relative_error: float
    competitor_variances: np.ndarray
    margins: np.ndarray  # (competitor - optimum) / standard error of the paired difference

    @property
    def min_margin(self) -> float:
        return float(self.margins.min()) if self.margins.size else float("inf")


def optimality_check(
    samples: pd.DataFrame,
    weights: Weights,
    analytic_variance: float,
    competitors: np.ndarray,
) -> OptimalityReport:
    """Compare the empirical variance at ``weights`` with competing weight vectors.

    Margins are measured in standard errors of the paired difference of
    squared centered deviations, so shared sampling noise cancels.
    """
    dev_opt = combined_deviation(samples, weights)
    dev_opt = dev_opt - dev_opt.mean()
    n = dev_opt.size
    emp = float(dev_opt @ dev_opt / (n - 1))
    comp_vars, margins = [], []
    for w in np.atleast_2d(competitors):
        dev = combined_deviation(samples, w)
        dev = dev - dev.mean()
        diff = dev * dev - dev_opt * dev_opt
        comp_vars.append(float(dev @ dev / (n - 1)))
        se = float(np.std(diff, ddof=1) / np.sqrt(n))
        margins.append(diff.mean() / se if se > 0 else (np.inf if diff.mean() > 0 else 0.0))
    return OptimalityReport(
        analytic_variance=analytic_variance,
        empirical_variance=emp,
        relative_error=abs(emp - analytic_variance) / analytic_variance if analytic_variance else abs(emp),
        competitor_variances=np.array(comp_vars),
        margins=np.array(margins),
    )
