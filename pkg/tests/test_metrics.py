import numpy as np
import pytest

from models.errors import EvaluationError
from models.network import AdjacencyTensor, BlockState
from reports.metrics import (
    adjusted_rand_index, coclustering, consensus_partition, density, evaluate_predictions, expected_degree,
    mae, observed_degree, posterior_degree, posterior_density, posterior_theta, relative_mae, roc_auc,
)
from services.gibbs_service import PosteriorTrace

from conftest import random_network


def constant_theta(n_nodes: int, value: float, n_layers: int = 1, n_times: int = 1) -> np.ndarray:
    theta = np.full((n_nodes, n_nodes, n_layers, n_times), value)
    idx = np.arange(n_nodes)
    theta[idx, idx] = 0.0
    return theta


def trace_from_assignments(latent, assignments) -> PosteriorTrace:
    trace = PosteriorTrace(
        times=np.arange(1.0, latent.T + 1), n_nodes=len(assignments[0]), n_layers=latent.K,
        n_blocks=latent.B, n_cross=latent.R, n_within=latent.H, kernels=latent.kernels,
    )
    for d, z in enumerate(assignments):
        trace.append(d, latent, BlockState.from_assignments(z, latent.B), 0.0)
    return trace


class TestSummaries:
    def test_density_of_constant_probabilities(self):
        theta = constant_theta(80, 0.5, n_layers=2, n_times=3)
        np.testing.assert_allclose(density(theta), 0.5)
        assert density(theta, k=1, t=2) == pytest.approx(0.5)

    def test_expected_degree(self):
        theta = constant_theta(80, 0.5)
        assert expected_degree(theta, i=3, k=0, t=0) == pytest.approx(39.5)

    def test_handshake_identity(self, tiny_network):
        degrees = observed_degree(tiny_network)
        np.testing.assert_allclose(degrees.sum(axis=0), 2 * tiny_network.edge_counts())
        pairs = tiny_network.N * (tiny_network.N - 1) / 2
        np.testing.assert_allclose(density(tiny_network) * pairs, tiny_network.edge_counts())

    def test_expected_degree_ignores_diagonal(self):
        theta = np.full((3, 3, 1, 1), 0.2)
        np.testing.assert_allclose(expected_degree(theta)[:, 0, 0], 0.4)


class TestErrors:
    def test_mae(self):
        truth = constant_theta(5, 0.3)
        assert mae(truth, truth) == 0.0
        assert mae(constant_theta(5, 0.4), truth) == pytest.approx(0.1)

    def test_relative_mae(self):
        truth = constant_theta(5, 0.3)
        assert relative_mae(constant_theta(5, 0.5), constant_theta(5, 0.1), truth) == pytest.approx(1.0)

    def test_shape_mismatch(self):
        with pytest.raises(EvaluationError) as excinfo:
            mae(constant_theta(5, 0.3), constant_theta(4, 0.3))
        assert excinfo.value.code == "shape_mismatch"


class TestRoc:
    def test_perfect_scores(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]).auc == 1.0

    def test_constant_scores(self):
        assert roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 1]).auc == pytest.approx(0.5)

    def test_partial_ordering(self):
        curve = roc_auc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0])
        assert curve.auc == pytest.approx(0.75)
        assert curve.fpr[0] == 0.0 and curve.tpr[-1] == 1.0

    def test_single_class(self):
        with pytest.raises(EvaluationError) as excinfo:
            roc_auc([0.1, 0.2], [1, 1])
        assert excinfo.value.code == "single_class"
        assert excinfo.value.exit_code == 2

    def test_non_binary_labels(self):
        with pytest.raises(EvaluationError):
            roc_auc([0.1, 0.2], [0, 2])


class TestBlockRecovery:
    def test_coclustering_is_label_invariant(self):
        first = coclustering(np.array([[0, 0, 1, 1], [0, 1, 1, 1]]))
        second = coclustering(np.array([[1, 1, 0, 0], [2, 0, 0, 0]]))
        np.testing.assert_array_equal(first, second)
        np.testing.assert_array_equal(np.diag(first), 1.0)
        assert first[0, 1] == 0.5

    def test_consensus_recovers_two_communities(self):
        draws = np.array([[0, 0, 0, 1, 1, 1]] * 8 + [[1, 0, 0, 1, 1, 0]] * 2)
        labels = consensus_partition(coclustering(draws), 2)
        np.testing.assert_array_equal(labels, [0, 0, 0, 1, 1, 1])

    def test_consensus_degenerate_cuts(self):
        C = coclustering(np.array([[0, 1, 0, 1]]))
        np.testing.assert_array_equal(consensus_partition(C, 1), [0, 0, 0, 0])
        np.testing.assert_array_equal(consensus_partition(C, 4), [0, 1, 2, 3])

    def test_adjusted_rand_index(self):
        assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)
        assert adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)


class TestPosteriorSummaries:
    def test_density_matches_pairwise_average(self, tiny_latent):
        trace = trace_from_assignments(tiny_latent, [[0, 1, 2, 0, 1], [2, 2, 1, 0, 0]])
        theta = posterior_theta(trace)
        np.testing.assert_allclose(posterior_density(trace).mean(axis=0), density(theta))
        np.testing.assert_allclose(posterior_degree(trace), expected_degree(theta))


class TestEvaluatePredictions:
    def test_needs_truth(self):
        with pytest.raises(EvaluationError) as excinfo:
            evaluate_predictions(constant_theta(4, 0.2))
        assert excinfo.value.code == "no_truth"

    def test_perfect_predictions(self, rng):
        network = random_network(rng, 8, 2, 2, density=0.4)
        theta = network.A.transpose(2, 3, 1, 0).astype(float)
        report = evaluate_predictions(theta, truth_network=network)
        assert report.roc_all.auc == 1.0
        payload = report.to_dict()
        assert payload['auc'] == 1.0
        assert set(payload['auc_layers']) <= {"1", "2"}

    def test_layer_mismatch(self, rng):
        network = random_network(rng, 5, 2, 1)
        with pytest.raises(EvaluationError) as excinfo:
            evaluate_predictions(constant_theta(5, 0.2, n_layers=3), truth_network=network)
        assert excinfo.value.code == "layer_mismatch"

    def test_single_class_layer_is_noted(self):
        A = np.zeros((1, 2, 3, 3), dtype=np.uint8)
        A[0, 0, 0, 1] = A[0, 0, 1, 0] = 1
        network = AdjacencyTensor(A, [1.0])
        report = evaluate_predictions(constant_theta(3, 0.2, n_layers=2), truth_network=network)
        assert list(report.roc_layers) == [0]
        assert report.notes and "layer 2" in report.notes[0]

    def test_baseline_relative_mae(self):
        truth = constant_theta(5, 0.3)
        report = evaluate_predictions(constant_theta(5, 0.35), truth_theta=truth,
                                      baseline_theta=constant_theta(5, 0.5))
        assert report.mae == pytest.approx(0.05)
        assert report.relative_mae == pytest.approx(0.25)
        assert report.to_dict()['relative_mae'] == pytest.approx(0.25)
        assert 'relative_time' not in report.to_dict()

    def test_baseline_needs_truth_probabilities(self, rng):
        network = random_network(rng, 5, 1, 1)
        with pytest.raises(EvaluationError) as excinfo:
            evaluate_predictions(constant_theta(5, 0.2), truth_network=network,
                                 baseline_theta=constant_theta(5, 0.4))
        assert excinfo.value.code == "no_truth"
