import numpy as np
import pandas as pd
import pytest

from valuecombine import (
    SimConfig,
    TriangulationParams,
    Weights,
    combination_variance,
    empirical_variance,
    generalized_weights,
    generate,
    oracle_min_weights,
    theorem1_weights,
)
from valuecombine.exceptions import EmptySample, InvalidWeights, NotPSD, ValidationError
from valuecombine.simulate import (
    correlation_factor,
    correlation_matrix,
    optimality_check,
    random_simplex_weights,
    write_samples,
)

from conftest import draw_params


def test_noise_free():
    s = generate(SimConfig(TriangulationParams(0, 0, 0, 0.5), 42.0, 100, 1))
    for col in ("price", "v_i", "v_c"):
        np.testing.assert_array_equal(s[col], s["v"])


def test_moments(example_params):
    s = generate(SimConfig(example_params, 100.0, 100_000, 7))
    dev = np.column_stack([s.price - s.v, s.v_i - s.v, s.v_c - s.v])
    np.testing.assert_allclose(dev.std(axis=0, ddof=1), [2.0, 1.0, 1.5], rtol=0.01)
    e = -dev[:, 0]
    assert np.corrcoef(e, dev[:, 2])[0, 1] == pytest.approx(0.3, abs=0.01)
    assert np.corrcoef(dev[:, 1], dev[:, 2])[0, 1] == pytest.approx(0.0, abs=0.01)


def test_moments_with_rho_i():
    p = TriangulationParams(1.0, 3.0, 0.5, -0.4, 0.6)
    s = generate(SimConfig(p, 0.0, 100_000, 8))
    e, ei, ec = s.v - s.price, s.v_i - s.v, s.v_c - s.v
    assert np.corrcoef(e, ei)[0, 1] == pytest.approx(0.6, abs=0.01)
    assert np.corrcoef(e, ec)[0, 1] == pytest.approx(-0.4, abs=0.01)
    np.testing.assert_allclose([e.std(), ei.std(), ec.std()], [1.0, 3.0, 0.5], rtol=0.01)


def test_per_draw_true_value(example_params):
    v = np.linspace(50, 150, 1000)
    s = generate(SimConfig(example_params, v, 1000, 3))
    np.testing.assert_array_equal(s.v, v)


def test_determinism(example_params):
    cfg = SimConfig(example_params, 100.0, 5000, 99)
    pd.testing.assert_frame_equal(generate(cfg), generate(cfg))
    assert not generate(SimConfig(example_params, 100.0, 5000, 98)).equals(generate(cfg))


def test_partitioned_generation(example_params):
    cfg = SimConfig(example_params, np.arange(10_000.0), 10_000, 5)
    a = generate(cfg, partitions=4, max_workers=1)
    b = generate(cfg, partitions=4, max_workers=4)
    pd.testing.assert_frame_equal(a, b)
    np.testing.assert_array_equal(a.v, np.arange(10_000.0))
    # reductions agree across partitionings up to sampling noise
    w = theorem1_weights(example_params)
    single = empirical_variance(generate(cfg), w)
    assert empirical_variance(a, w) == pytest.approx(single, rel=0.05)


def test_not_psd():
    with pytest.raises(NotPSD):
        SimConfig(TriangulationParams(1, 1, 1, 0.9, 0.9), 0.0, 10, 0)
    eig = np.linalg.eigvalsh(correlation_matrix(TriangulationParams(1, 1, 1, 0.9, 0.9)))
    assert eig[0] < 0


def test_semidefinite_boundary_is_allowed():
    p = TriangulationParams(1.0, 1.0, 1.0, 1.0)
    L = correlation_factor(p)
    np.testing.assert_allclose(L @ L.T, correlation_matrix(p), atol=1e-12)
    s = generate(SimConfig(p, 0.0, 1000, 0))
    # perfectly correlated: comparables error equals market noise
    np.testing.assert_allclose(s.v_c - s.v, s.v - s.price, atol=1e-12)


def test_config_validation(example_params):
    with pytest.raises(ValidationError):
        SimConfig(example_params, 0.0, 0, 0)
    with pytest.raises(ValidationError):
        SimConfig(example_params, np.zeros(5), 10, 0)


class TestEmpiricalVariance:
    samples = None

    @pytest.fixture(autouse=True)
    def _samples(self, example_params):
        self.params = example_params
        self.samples = generate(SimConfig(example_params, 100.0, 1_000_000, 2024))

    def test_price_only(self):
        assert empirical_variance(self.samples, Weights(1, 0, 0)) == pytest.approx(4.0, rel=0.01)

    def test_optimal_matches_analytic(self):
        w = theorem1_weights(self.params)
        assert empirical_variance(self.samples, w) == pytest.approx(117 / 232, rel=0.01)

    def test_perturbed_is_worse(self):
        w = theorem1_weights(self.params).as_array()
        worse = w + np.array([0.1, -0.1, 0.0])
        assert empirical_variance(self.samples, worse) > empirical_variance(self.samples, w)

    def test_bad_inputs(self):
        with pytest.raises(InvalidWeights):
            empirical_variance(self.samples, [0.5, 0.5, 0.5])
        with pytest.raises(EmptySample):
            empirical_variance(self.samples.iloc[:0], Weights(1, 0, 0))


class TestOracle:
    def test_symmetric(self):
        w = oracle_min_weights(TriangulationParams(1, 1, 1, 0, 0))
        np.testing.assert_allclose(w.as_tuple(), [1 / 3] * 3, atol=1e-9)

    def test_grid_only_within_resolution(self):
        w = oracle_min_weights(TriangulationParams(1, 1, 1, 0, 0), resolution=0.01, refine_steps=0)
        np.testing.assert_allclose(w.as_tuple(), [1 / 3] * 3, atol=0.01)

    def test_matches_theorem1(self, example_params):
        np.testing.assert_allclose(
            oracle_min_weights(example_params).as_tuple(), theorem1_weights(example_params).as_tuple(), atol=1e-6
        )

    def test_matches_generalized(self):
        p = TriangulationParams(2.0, 1.0, 1.5, 0.3, 0.4)
        np.testing.assert_allclose(oracle_min_weights(p).as_tuple(), generalized_weights(p).as_tuple(), atol=1e-6)

    def test_optimum_outside_grid(self):
        # strong hedging pushes weights beyond [-1, 2]; refinement still finds them
        p = TriangulationParams(1.0, 10.0, 0.5, -0.95, 0.3)
        assert generalized_weights(p).kappa_c > 2.0
        np.testing.assert_allclose(oracle_min_weights(p).as_tuple(), generalized_weights(p).as_tuple(), atol=1e-6)


def test_optimal_beats_random_weights(rng):
    for p in draw_params(rng, 3):
        samples = generate(SimConfig(p, 0.0, 200_000, int(rng.integers(1 << 30))))
        w = oracle_min_weights(p)
        competitors = random_simplex_weights(rng, 100)
        report = optimality_check(samples, w, combination_variance(w, p), competitors)
        # optimum never loses by more than 3 Monte Carlo standard errors
        assert np.all(report.margins > -3.0)


def test_write_samples(tmp_path, example_params):
    s = generate(SimConfig(example_params, 100.0, 10, 0))
    path = tmp_path / "s.csv"
    write_samples(s, path)
    back = pd.read_csv(path)
    assert list(back.columns) == ["v", "price", "v_i", "v_c"]
    np.testing.assert_allclose(back.to_numpy(), s.to_numpy(), rtol=1e-11)
