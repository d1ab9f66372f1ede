import numpy as np
import pandas as pd
import pytest

from config import PatternMix, SynthConfig
from services.export_service import write_ground_truth
from services.synth_service import gram_smoother, generate, pattern_trajectory


def synth_config(**changes) -> SynthConfig:
    settings = dict(n_nodes=10, n_blocks=3, n_layers=2, n_times=5, n_cross=2, n_within=2, seed=42)
    settings.update(changes)
    return SynthConfig(**settings)


def test_shapes():
    result = generate(synth_config())
    assert result.data.A.shape == (5, 2, 10, 10)
    assert result.theta.shape == (10, 10, 2, 5)
    assert result.pi.shape == (3, 3, 2, 5)
    np.testing.assert_array_equal(result.data.times, np.arange(1.0, 6.0))


def test_seed_determinism():
    first, second = generate(synth_config()), generate(synth_config())
    np.testing.assert_array_equal(first.data.A, second.data.A)
    np.testing.assert_array_equal(first.theta, second.theta)
    assert first.seed == second.seed == 42


def test_balanced_assignment():
    result = generate(synth_config())
    np.testing.assert_array_equal(np.sort(np.bincount(result.z)), [3, 3, 4])


def test_dirichlet_assignment_labels_in_range():
    result = generate(synth_config(assignment="dirichlet"))
    assert result.z.min() >= 0 and result.z.max() < 3


def test_no_blocks_uses_identity():
    result = generate(synth_config(no_blocks=True))
    np.testing.assert_array_equal(result.z, np.arange(10))
    assert result.pi.shape[0] == 10


def test_theta_matches_block_probabilities():
    result = generate(synth_config())
    i, j = 0, 1
    np.testing.assert_array_equal(result.theta[i, j], result.pi[result.z[i], result.z[j]])
    np.testing.assert_array_equal(result.theta[i, i], 0.0)


def test_too_many_blocks_rejected():
    with pytest.raises(ValueError):
        SynthConfig(n_nodes=3, n_blocks=4)


def test_constant_patterns_stay_constant():
    times = np.arange(1.0, 9.0)
    raw = pattern_trajectory("constant", times, np.random.default_rng(0))
    smoothed = raw @ gram_smoother(times, 0.05).T
    np.testing.assert_allclose(smoothed, raw)
    result = generate(synth_config(patterns=PatternMix(constant=1.0, seasonal=0.0, trend=0.0)))
    np.testing.assert_allclose(result.latent.mu, result.latent.mu[0])


def test_smoother_rows_sum_to_one():
    np.testing.assert_allclose(gram_smoother(np.arange(1.0, 7.0), 0.3).sum(axis=1), 1.0)


def test_ground_truth_files(tmp_path):
    result = generate(synth_config())
    write_ground_truth(tmp_path, result.theta, result.z, result.data.times)
    theta = pd.read_csv(tmp_path / "truth_theta.csv")
    assert len(theta) == 5 * 2 * 10 * 9 // 2
    assert list(theta.columns) == ["t", "layer", "i", "j", "prob"]
    assert (theta["i"] < theta["j"]).all()
    labels = pd.read_csv(tmp_path / "truth_z.csv")
    assert len(labels) == 10
    assert labels.iloc[:, 1].min() >= 1
