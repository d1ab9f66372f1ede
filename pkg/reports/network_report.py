"""
DMBN Toolkit - Network Report Generator
Posterior summary tables (densities with credible intervals, expected
degrees, co-clustering and consensus clusters), evaluation outputs (metrics
and ROC curves) and an Excel workbook with one sheet per table.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd
import openpyxl
from openpyxl.chart import LineChart, Reference
from openpyxl.styles import Alignment, Border, Font, NamedStyle, PatternFill, Side
from openpyxl.utils import get_column_letter

from config import ReportConfig
from models.network import AdjacencyTensor
from reports.metrics import (
    MetricsReport, adjusted_rand_index, coclustering, consensus_partition, density, draw_degree, draw_density,
    posterior_degree, posterior_density,
)
from services.forecast_service import ForecastResult
from services.gibbs_service import PosteriorTrace
from utils.formatters import FLOAT_FORMAT
from utils.helpers import ensure_directory, write_json
from utils.validators import ValidationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ExcelStyleManager:
    """Named styles shared by every report sheet"""

    def __init__(self, workbook: openpyxl.Workbook):
        self.workbook = workbook
        self._create_named_styles()

    def _create_named_styles(self) -> None:
        thin = Side(style='thin')
        header_style = NamedStyle(name="header_style")
        header_style.font = Font(name='Calibri', size=11, bold=True, color='FFFFFF')
        header_style.fill = PatternFill(start_color='366092', end_color='366092', fill_type='solid')
        header_style.alignment = Alignment(horizontal='center', vertical='center')
        header_style.border = Border(left=thin, right=thin, top=thin, bottom=thin)
        self.workbook.add_named_style(header_style)


@dataclass
class ReportTables:
    """Posterior summary tables keyed by output name"""

    density: pd.DataFrame
    degree: pd.DataFrame
    clusters: pd.DataFrame
    coclustering: pd.DataFrame
    metrics: Dict[str, object] = field(default_factory=dict)

    def frames(self) -> Dict[str, pd.DataFrame]:
        return {
            'density': self.density, 'degree': self.degree,
            'clusters': self.clusters, 'coclustering': self.coclustering,
        }


class NetworkReportGenerator:
    """Builds and writes posterior summaries of a trace"""

    def __init__(self, cfg: Optional[ReportConfig] = None):
        self.cfg = cfg or ReportConfig()

    def _node_labels(self, trace: PosteriorTrace) -> List[str]:
        if trace.node_names:
            return list(trace.node_names)
        return [str(i) for i in range(1, trace.n_nodes + 1)]

    def _bounds(self, draws: np.ndarray) -> np.ndarray:
        """Equal-tailed credible bounds over the leading draw axis"""
        tail = 0.5 * (1.0 - self.cfg.interval)
        return np.quantile(draws, [tail, 1.0 - tail], axis=0)

    def density_table(self, trace: PosteriorTrace, observed: Optional[AdjacencyTensor] = None) -> pd.DataFrame:
        """layer, t, mean, lower, upper, observed; t is the time stamp"""
        draws = posterior_density(trace)
        lower, upper = self._bounds(draws)
        K, T = draws.shape[1:]
        stamps = np.asarray(trace.times, dtype=np.float64)

        observed_values = np.full((K, T), np.nan)
        if observed is not None and observed.K == K and observed.T == T:
            observed_values = density(observed)
        elif observed is not None:
            logger.warning("Observed network does not match the trace dimensions; observed density left empty")

        return pd.DataFrame({
            'layer': np.repeat(np.arange(1, K + 1), T),
            't': np.tile(stamps, K),
            'mean': draws.mean(axis=0).ravel(),
            'lower': lower.ravel(),
            'upper': upper.ravel(),
            'observed': observed_values.ravel(),
        })

    def degree_table(self, trace: PosteriorTrace) -> pd.DataFrame:
        """node, layer, t, mean"""
        degrees = posterior_degree(trace)
        N, K, T = degrees.shape
        stamps = np.asarray(trace.times, dtype=np.float64)
        labels = np.asarray(self._node_labels(trace), dtype=object)
        return pd.DataFrame({
            'node': np.repeat(labels, K * T),
            'layer': np.tile(np.repeat(np.arange(1, K + 1), T), N),
            't': np.tile(stamps, N * K),
            'mean': degrees.ravel(),
        })

    def forecast_tables(self, result: ForecastResult,
                        node_labels: Optional[Sequence[str]] = None) -> Dict[str, pd.DataFrame]:
        """Density and expected degree at the predicted stamps with credible bounds over draws"""
        densities = np.stack([draw_density(pi, z) for pi, z in zip(result.pi, result.z)])
        degrees = np.stack([draw_degree(pi, z) for pi, z in zip(result.pi, result.z)])
        N, K, T = degrees.shape[1:]
        labels = np.asarray(node_labels or [str(i) for i in range(1, N + 1)], dtype=object)
        if labels.size != N:
            raise ValidationError(f"expected {N} node labels, got {labels.size}", field="node_names")

        d_lower, d_upper = self._bounds(densities)
        g_lower, g_upper = self._bounds(degrees)
        return {
            'forecast_density': pd.DataFrame({
                'layer': np.repeat(np.arange(1, K + 1), T),
                't': np.tile(result.stamps, K),
                'mean': densities.mean(axis=0).ravel(),
                'lower': d_lower.ravel(),
                'upper': d_upper.ravel(),
            }),
            'forecast_degree': pd.DataFrame({
                'node': np.repeat(labels, K * T),
                'layer': np.tile(np.repeat(np.arange(1, K + 1), T), N),
                't': np.tile(result.stamps, N * K),
                'mean': degrees.mean(axis=0).ravel(),
                'lower': g_lower.ravel(),
                'upper': g_upper.ravel(),
            }),
        }

    def build(self, trace: PosteriorTrace, observed: Optional[AdjacencyTensor] = None,
              truth_z: Optional[np.ndarray] = None) -> ReportTables:
        if len(trace) == 0:
            raise ValidationError("trace holds no draws", field="trace", code="empty_trace")

        labels = self._node_labels(trace)
        C = coclustering(trace)
        n_clusters = self.cfg.n_clusters or self._modal_block_count(trace)
        partition = consensus_partition(C, n_clusters)

        metrics: Dict[str, object] = {
            'draws': len(trace),
            'n_clusters': int(partition.max()) + 1 if partition.size else 0,
            'interval': self.cfg.interval,
        }
        if truth_z is not None:
            metrics['ari'] = adjusted_rand_index(truth_z, partition)

        tables = ReportTables(
            density=self.density_table(trace, observed),
            degree=self.degree_table(trace),
            clusters=pd.DataFrame({'node': labels, 'cluster': partition + 1}),
            coclustering=pd.DataFrame(C, index=labels, columns=labels),
            metrics=metrics,
        )
        logger.info(f"Built report over {len(trace)} draws with {metrics['n_clusters']} consensus clusters")
        return tables

    @staticmethod
    def _modal_block_count(trace: PosteriorTrace) -> int:
        """Most frequent number of occupied blocks across draws"""
        occupied = [np.unique(z).size for z in trace.draws["z"]]
        values, counts = np.unique(occupied, return_counts=True)
        return int(values[np.argmax(counts)])

    # ========== OUTPUT ==========

    def write(self, out_dir: PathLike, tables: ReportTables) -> Dict[str, Path]:
        out = ensure_directory(out_dir)
        files: Dict[str, Path] = {}
        for name, frame in tables.frames().items():
            path = out / f"{name}.csv"
            frame.to_csv(path, index=(name == "coclustering"), float_format=FLOAT_FORMAT)
            files[name] = path

        files['metrics'] = write_json(out / "metrics.json", tables.metrics)
        if self.cfg.excel:
            files['workbook'] = self.write_workbook(out / "report.xlsx", tables.frames())
        return files

    def write_workbook(self, path: PathLike, frames: Dict[str, pd.DataFrame]) -> Path:
        """One styled sheet per table plus a density chart"""
        with pd.ExcelWriter(path, engine="openpyxl") as writer:
            for name, frame in frames.items():
                frame.to_excel(writer, sheet_name=name.title(), index=(name == "coclustering"))

            workbook = writer.book
            ExcelStyleManager(workbook)
            for sheet in workbook.worksheets:
                for cell in sheet[1]:
                    cell.style = "header_style"
                self._auto_adjust_columns(sheet)
            if "Density" in workbook.sheetnames:
                self._create_density_chart(workbook["Density"], len(frames["density"]))

        logger.info(f"Generated report workbook: {path}")
        return Path(path)

    def _create_density_chart(self, ws, data_rows: int) -> None:
        chart = LineChart()
        chart.title = "Posterior mean density"
        chart.y_axis.title = 'Density'
        chart.x_axis.title = 'Row (layer, time)'
        data = Reference(ws, min_col=3, min_row=1, max_row=data_rows + 1, max_col=6)
        chart.add_data(data, titles_from_data=True)
        ws.add_chart(chart, "H2")

    def _auto_adjust_columns(self, ws) -> None:
        for column in ws.columns:
            column_letter = get_column_letter(column[0].column)
            max_length = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
            ws.column_dimensions[column_letter].width = min(max_length + 2, 50)


def write_evaluation(out_dir: PathLike, report: MetricsReport) -> Dict[str, Path]:
    """metrics.json plus roc_<layer>.csv and roc_all.csv (fpr, tpr, threshold)"""
    out = ensure_directory(out_dir)
    files = {'metrics': write_json(out / "metrics.json", report.to_dict())}
    curves = {f"roc_{k + 1}": curve for k, curve in report.roc_layers.items()}
    if report.roc_all is not None:
        curves['roc_all'] = report.roc_all
    for name, curve in curves.items():
        pd.DataFrame(curve.as_rows()).to_csv(out / f"{name}.csv", index=False, float_format=FLOAT_FORMAT)
        files[name] = out / f"{name}.csv"
    logger.info(f"Wrote evaluation to {out}")
    return files


def write_forecast_summary(out_dir: PathLike, result: ForecastResult, cfg: Optional[ReportConfig] = None,
                           node_names: Optional[Sequence[str]] = None) -> Dict[str, Path]:
    """forecast_density.csv and forecast_degree.csv next to the predictions"""
    out = ensure_directory(out_dir)
    files: Dict[str, Path] = {}
    for name, frame in NetworkReportGenerator(cfg).forecast_tables(result, node_names).items():
        files[name] = out / f"{name}.csv"
        frame.to_csv(files[name], index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote forecast summaries for {result.stamps.size} stamps to {out}")
    return files


def generate_report(trace: PosteriorTrace, out_dir: PathLike, cfg: Optional[ReportConfig] = None,
                    observed: Optional[AdjacencyTensor] = None,
                    truth_z: Optional[np.ndarray] = None) -> Dict[str, Path]:
    """Convenience function to build and write a posterior report"""
    generator = NetworkReportGenerator(cfg)
    return generator.write(out_dir, generator.build(trace, observed, truth_z))
