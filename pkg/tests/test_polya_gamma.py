import math

import numpy as np
import pytest

from services.polya_gamma import (
    SMALL_C, normal_approximation_error, pg_mean, pg_sample, pg_sample_cells, pg_sample_exact, pg_variance
)
from utils.validators import ValidationError


class TestMoments:
    def test_mean_at_zero(self):
        assert pg_mean(1, 0.0) == pytest.approx(0.25)
        assert pg_mean(3, 0.0) == pytest.approx(0.75)

    def test_mean_closed_form(self):
        assert pg_mean(1, 2.0) == pytest.approx(math.tanh(1.0) / 4.0, rel=1e-12)
        assert pg_mean(5, -3.0) == pytest.approx(5 / 6.0 * math.tanh(1.5), rel=1e-12)

    def test_variance_at_zero(self):
        assert pg_variance(1, 0.0) == pytest.approx(1.0 / 24.0)

    def test_variance_closed_form(self):
        c = 2.0
        alpha = math.tanh(c / 2)
        expected = (alpha ** 2 - 1) / (4 * c ** 2) + alpha / (2 * c ** 3)
        assert pg_variance(1, c) == pytest.approx(expected, rel=1e-10)

    def test_continuous_across_series_switch(self):
        below, above = 0.999 * SMALL_C, 1.001 * SMALL_C
        assert pg_mean(1, below) == pytest.approx(pg_mean(1, above), rel=1e-9)
        assert pg_variance(1, below) == pytest.approx(pg_variance(1, above), rel=1e-5)

    def test_large_tilt_is_finite(self):
        assert pg_mean(1, 800.0) == pytest.approx(1 / 1600.0)
        assert np.isfinite(pg_variance(1, 800.0))
        assert pg_variance(1, 800.0) > 0

    def test_arrays(self):
        means = pg_mean(np.array([1.0, 2.0]), np.array([0.0, 0.0]))
        np.testing.assert_allclose(means, [0.25, 0.5])

    @pytest.mark.parametrize("b", [0, -1])
    def test_rejects_nonpositive_shape(self, b):
        with pytest.raises(ValidationError) as excinfo:
            pg_mean(b, 1.0)
        assert excinfo.value.field == "b"


class TestSampling:
    def test_zero_shape_is_point_mass(self, rng):
        assert pg_sample_exact(0, 1.5, rng) == 0.0
        assert pg_sample(0, 1.5, rng) == 0.0

    def test_fractional_shape_rejected_below_threshold(self, rng):
        with pytest.raises(ValidationError) as excinfo:
            pg_sample(2.5, 1.0, rng)
        assert excinfo.value.field == "b"
        assert pg_sample(3.0, 1.0, rng) > 0

    def test_exact_mean(self):
        rng = np.random.default_rng(3)
        draws = np.array([pg_sample(1, 2.0, rng) for _ in range(20000)])
        se = math.sqrt(pg_variance(1, 2.0) / draws.size)
        assert abs(draws.mean() - pg_mean(1, 2.0)) < 5 * se

    def test_normal_regime_mean(self):
        rng = np.random.default_rng(5)
        draws = np.array([pg_sample(100, 10.0, rng, threshold=100) for _ in range(20000)])
        assert np.all(draws > 0)
        assert abs(draws.mean() / pg_mean(100, 10.0) - 1.0) < 0.05

    def test_seeded_determinism(self):
        first = pg_sample(3, 0.7, np.random.default_rng(11))
        second = pg_sample(3, 0.7, np.random.default_rng(11))
        assert first == second

    def test_cells(self, rng):
        counts = np.array([[0, 3], [150, 1]])
        logits = np.array([[0.5, -1.0], [2.0, 0.0]])
        omega = pg_sample_cells(counts, logits, rng)
        assert omega.shape == (2, 2)
        assert omega[0, 0] == 0.0
        assert np.all(omega[counts > 0] > 0)

    def test_cells_mean(self):
        rng = np.random.default_rng(17)
        counts = np.full(20000, 4)
        omega = pg_sample_cells(counts, np.full(20000, 1.0), rng)
        se = math.sqrt(pg_variance(4, 1.0) / omega.size)
        assert abs(omega.mean() - pg_mean(4, 1.0)) < 5 * se


class TestApproximationCheck:
    def test_grid_rows_and_accuracy_at_large_shape(self):
        table = normal_approximation_error([200], [1.0, 10.0], 20000, np.random.default_rng(8))
        assert list(table["c"]) == [1.0, 10.0]
        np.testing.assert_allclose(table["mean"], [pg_mean(200, 1.0), pg_mean(200, 10.0)])
        assert (table["exact_mean_error"] < 0.01).all()
        assert (table["normal_mean_error"] < 0.01).all()
        assert (table["normal_variance_error"] < 0.05).all()

    def test_small_shape_is_skewed_away_from_normal(self):
        # PG(1, c) is right-skewed; truncation at zero biases the normal draws upwards
        table = normal_approximation_error([1], [0.1], 20000, np.random.default_rng(9))
        row = table.iloc[0]
        assert row["exact_mean_error"] < 0.02
        assert row["normal_mean_error"] > row["exact_mean_error"]

    @pytest.mark.parametrize("b", [0, 2.5])
    def test_rejects_non_integer_shape(self, b):
        with pytest.raises(ValidationError):
            normal_approximation_error([b], [1.0], 100, np.random.default_rng(1))


@pytest.mark.slow
class TestMomentFidelity:
    def test_million_exact_draws(self):
        rng = np.random.default_rng(2024)
        draws = pg_sample_cells(np.ones(10 ** 6), np.full(10 ** 6, 2.0), rng)
        assert abs(draws.mean() / 0.19040 - 1.0) < 0.01

    def test_variance_at_zero_tilt(self):
        rng = np.random.default_rng(2025)
        draws = pg_sample_cells(np.ones(10 ** 6), np.zeros(10 ** 6), rng)
        assert abs(draws.var() * 24.0 - 1.0) < 0.03

    @pytest.mark.parametrize("c, tolerance", [(10.0, 0.05), (1.0, 0.20)])
    def test_normal_regime_accuracy(self, c, tolerance):
        rng = np.random.default_rng(99)
        draws = pg_sample_cells(np.full(10 ** 5, 100), np.full(10 ** 5, c), rng, threshold=100)
        assert abs(draws.mean() / pg_mean(100, c) - 1.0) < tolerance
