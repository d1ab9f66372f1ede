import json

import numpy as np
import openpyxl
import pandas as pd
import pytest

from config import ReportConfig
from models.network import BlockState
from reports.metrics import MetricsReport, roc_auc
from reports.network_report import NetworkReportGenerator, generate_report, write_evaluation
from services.gibbs_service import PosteriorTrace
from utils.validators import ValidationError


@pytest.fixture
def trace(tiny_latent):
    result = PosteriorTrace(
        times=np.arange(1.0, tiny_latent.T + 1), n_nodes=6, n_layers=tiny_latent.K, n_blocks=tiny_latent.B,
        n_cross=tiny_latent.R, n_within=tiny_latent.H, kernels=tiny_latent.kernels,
    )
    for d, z in enumerate([[0, 0, 0, 1, 1, 1], [0, 0, 0, 1, 1, 1], [2, 2, 2, 1, 1, 0]]):
        result.append(d, tiny_latent, BlockState.from_assignments(z, tiny_latent.B), 0.0)
    return result


def test_density_table(trace, tiny_network):
    table = NetworkReportGenerator().density_table(trace, observed=tiny_network)
    assert len(table) == trace.n_layers * trace.n_times
    assert list(table.columns) == ["layer", "t", "mean", "lower", "upper", "observed"]
    assert (table["lower"] <= table["mean"]).all() and (table["mean"] <= table["upper"]).all()
    assert table["observed"].notna().all()


def test_build_uses_modal_block_count(trace):
    tables = NetworkReportGenerator().build(trace, truth_z=np.array([0, 0, 0, 1, 1, 1]))
    assert tables.metrics['n_clusters'] == 2
    assert tables.metrics['ari'] == pytest.approx(1.0)
    assert tables.clusters["cluster"].tolist() == [1, 1, 1, 2, 2, 2]
    assert tables.coclustering.shape == (6, 6)


def test_explicit_cluster_count(trace):
    tables = NetworkReportGenerator(ReportConfig(n_clusters=1)).build(trace)
    assert tables.clusters["cluster"].tolist() == [1] * 6


def test_empty_trace_rejected(trace):
    with pytest.raises(ValidationError):
        NetworkReportGenerator().build(trace.select([]))


def test_generate_report_files(trace, tmp_path):
    files = generate_report(trace, tmp_path)
    assert {"density", "degree", "clusters", "coclustering", "metrics", "workbook"} <= set(files)
    workbook = openpyxl.load_workbook(files['workbook'])
    assert workbook.sheetnames == ["Density", "Degree", "Clusters", "Coclustering"]
    assert workbook["Density"]["A1"].font.bold
    degree = pd.read_csv(files['degree'])
    assert len(degree) == 6 * trace.n_layers * trace.n_times


def test_excel_can_be_disabled(trace, tmp_path):
    files = generate_report(trace, tmp_path, ReportConfig(excel=False))
    assert 'workbook' not in files
    assert not (tmp_path / "report.xlsx").exists()


def test_write_evaluation(tmp_path):
    curve = roc_auc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0])
    report = MetricsReport(mae=0.1, roc_layers={0: curve}, roc_all=curve)
    files = write_evaluation(tmp_path, report)
    metrics = json.loads(files['metrics'].read_text())
    assert metrics['auc'] == pytest.approx(0.75)
    assert metrics['auc_layers'] == {"1": pytest.approx(0.75)}
    roc = pd.read_csv(tmp_path / "roc_1.csv")
    assert list(roc.columns) == ["fpr", "tpr", "threshold"]
    assert (tmp_path / "roc_all.csv").exists()
