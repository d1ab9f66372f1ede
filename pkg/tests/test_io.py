import io
import json

import numpy as np
import pandas as pd
import pytest

from models.network import AdjacencyTensor
from services.export_service import (
    edge_list_frame, trace_columns, write_network, write_predictions, write_trace
)
from services.gibbs_service import PARAMETER_GROUPS, run_chain
from services.import_service import (
    load_network, load_node_names, load_times, pair_table_to_theta, read_predictions, read_trace, read_truth_z
)
from utils.validators import ValidationError

from conftest import random_network, small_config


class TestNetworkFiles:
    def test_edge_list_is_upper_triangle_one_based(self):
        A = np.zeros((1, 1, 3, 3), dtype=np.uint8)
        A[0, 0, 0, 2] = A[0, 0, 2, 0] = 1
        frame = edge_list_frame(AdjacencyTensor(A, [1.0]))
        assert frame.to_dict("records") == [{'t': 1, 'layer': 1, 'i': 1, 'j': 3}]

    def test_network_round_trip(self, tmp_path, rng):
        network = random_network(rng, 5, 2, 3)
        named = AdjacencyTensor(network.A, [0.5, 1.25, 4.0], node_names=list("abcde"))
        write_network(tmp_path, named)
        loaded = load_network(tmp_path)
        np.testing.assert_array_equal(loaded.A, named.A)
        np.testing.assert_array_equal(loaded.times, [0.5, 1.25, 4.0])
        assert loaded.node_names == list("abcde")

    def test_dimensions_inferred_without_manifest(self, tmp_path):
        (tmp_path / "edges.csv").write_text("t,layer,i,j\n2,1,1,4\n")
        network = load_network(tmp_path / "edges.csv")
        assert (network.N, network.K, network.T) == (4, 1, 2)

    def test_empty_edges_keep_manifest_dims(self, tmp_path):
        write_network(tmp_path, AdjacencyTensor.empty(4, 2, 3))
        network = load_network(tmp_path)
        assert network.A.shape == (3, 2, 4, 4)
        assert network.A.sum() == 0

    def test_missing_edge_list(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_network(tmp_path / "nowhere")

    def test_missing_columns(self, tmp_path):
        (tmp_path / "edges.csv").write_text("t,i,j\n1,1,2\n")
        with pytest.raises(ValidationError) as excinfo:
            load_network(tmp_path)
        assert excinfo.value.code == "missing_columns"


class TestSideFiles:
    def test_times_are_ordered_by_index(self):
        stamps = load_times(io.StringIO("t,stamp\n2,3.5\n1,1.0\n"))
        np.testing.assert_array_equal(stamps, [1.0, 3.5])

    def test_times_must_increase(self):
        with pytest.raises(ValidationError) as excinfo:
            load_times(io.StringIO("t,stamp\n1,2.0\n2,2.0\n"))
        assert excinfo.value.code == "not_increasing"

    def test_times_index_gaps(self):
        with pytest.raises(ValidationError):
            load_times(io.StringIO("t,stamp\n1,1.0\n3,2.0\n"))

    def test_node_names(self):
        names = load_node_names(io.StringIO("i,name\n2,bob\n1,ann\n"), n_nodes=2)
        assert names == ["ann", "bob"]
        with pytest.raises(ValidationError):
            load_node_names(io.StringIO("i,name\n1,ann\n"), n_nodes=2)

    def test_truth_z_is_zero_based(self, tmp_path):
        (tmp_path / "truth_z.csv").write_text("node,block\n2,1\n1,3\n")
        np.testing.assert_array_equal(read_truth_z(tmp_path), [2, 0])


class TestTraceFiles:
    def test_round_trip(self, tmp_path, tiny_network):
        trace = run_chain(tiny_network, small_config(store_pi=True))
        write_trace(tmp_path, trace, data_path="data/edges.csv")
        loaded = read_trace(tmp_path)

        assert loaded.iterations == trace.iterations
        assert loaded.kernels == trace.kernels
        assert loaded.seed == trace.seed
        assert loaded.dims() == trace.dims()
        for group in PARAMETER_GROUPS + ("pi", "loglik"):
            np.testing.assert_array_equal(loaded.stack(group), trace.stack(group))

    def test_files_are_one_based(self, tmp_path, tiny_network):
        trace = run_chain(tiny_network, small_config())
        write_trace(tmp_path, trace)
        z = pd.read_csv(tmp_path / "z.csv")
        assert list(z.columns) == ["iteration"] + trace_columns("z", trace.dims())
        assert z.drop(columns="iteration").to_numpy().min() >= 1
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["dims"]["B"] == 2
        assert "pi" not in manifest["groups"]

    def test_iteration_mismatch(self, tmp_path, tiny_network):
        trace = run_chain(tiny_network, small_config())
        write_trace(tmp_path, trace)
        mu = pd.read_csv(tmp_path / "mu.csv")
        mu["iteration"] += 1
        mu.to_csv(tmp_path / "mu.csv", index=False)
        with pytest.raises(ValidationError) as excinfo:
            read_trace(tmp_path)
        assert excinfo.value.code == "iteration_mismatch"

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_trace(tmp_path)


class TestPredictionFiles:
    def test_rows_and_round_trip(self, tmp_path, rng):
        theta = rng.uniform(size=(5, 5, 2, 3))
        theta = (theta + theta.transpose(1, 0, 2, 3)) / 2
        theta[np.arange(5), np.arange(5)] = 0.0
        write_predictions(tmp_path, theta, [13.0, 14.0, 15.0], draws=[0, 1], extra={'n_nodes': 5})

        frame = read_predictions(tmp_path)
        assert len(frame) == 10 * 2 * 3
        restored, stamps = pair_table_to_theta(frame, 5)
        np.testing.assert_array_equal(restored, theta)
        np.testing.assert_array_equal(stamps, [13.0, 14.0, 15.0])

        manifest = json.loads((tmp_path / "preds_manifest.json").read_text())
        assert manifest["draws_used"] == 2 and manifest["n_nodes"] == 5
