import numpy as np
import pytest

from valuecombine import TriangulationParams


def draw_params(rng, n, with_rho_i=True, max_corr_norm=0.95):
    """Random valid noise models: sigmas in [0.1, 10], correlations in [-0.9, 0.9].

    Pairs with rho**2 + rho_i**2 > max_corr_norm are redrawn; beyond 1 the
    error covariance is not positive semidefinite and no minimum exists.
    """
    out = []
    while len(out) < n:
        s, si, sc = rng.uniform(0.1, 10.0, size=3)
        rho = rng.uniform(-0.9, 0.9)
        rho_i = rng.uniform(-0.9, 0.9) if with_rho_i else 0.0
        if rho**2 + rho_i**2 > max_corr_norm:
            continue
        out.append(TriangulationParams(s, si, sc, rho, rho_i))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def example_params():
    return TriangulationParams(sigma_p=2.0, sigma_i=1.0, sigma_c=1.5, rho=0.3)
