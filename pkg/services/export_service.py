"""
DMBN Toolkit - Export Service
Writers for every on-disk artifact: edge lists with their time and node-name
side files, sampler trace directories, ground truth of synthetic networks and
edge predictions. All floats are written with 17 significant digits.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd

from models.network import AdjacencyTensor
from services.gibbs_service import PosteriorTrace
from utils.formatters import FLOAT_FORMAT, generate_run_id, index_labels
from utils.helpers import ensure_directory, upper_pairs, write_json

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Trace file layout: group -> (index letters, dimension names)
TRACE_LAYOUT: Dict[str, Tuple[str, Tuple[str, ...]]] = {
    'mu': ("t", ("T",)),
    'mu_pk': ("pkt", ("B", "K", "T")),
    'xbar': ("prt", ("B", "R", "T")),
    'x': ("pkht", ("B", "K", "H", "T")),
    'delta': ("r", ("R",)),
    'delta_k': ("kh", ("K", "H")),
    'eta': ("p", ("B",)),
    'z': ("i", ("N",)),
    'pi': ("pqkt", ("B", "B", "K", "T")),
}


def trace_shape(group: str, dims: Dict[str, int]) -> Tuple[int, ...]:
    """Per-draw array shape of a trace group"""
    return tuple(int(dims[name]) for name in TRACE_LAYOUT[group][1])


def trace_columns(group: str, dims: Dict[str, int]) -> List[str]:
    """Column labels of a trace CSV after the leading iteration column"""
    letters, _ = TRACE_LAYOUT[group]
    return index_labels(letters, *trace_shape(group, dims))


# ========== NETWORK FILES ==========

def edge_list_frame(A: AdjacencyTensor) -> pd.DataFrame:
    """Rows (t, layer, i, j), 1-based, one per undirected edge with i < j"""
    t, k, i, j = np.nonzero(np.triu(A.A, k=1))
    return pd.DataFrame({'t': t + 1, 'layer': k + 1, 'i': i + 1, 'j': j + 1})


def write_edge_list(path: PathLike, A: AdjacencyTensor) -> Path:
    target = Path(path)
    ensure_directory(target.parent)
    edge_list_frame(A).to_csv(target, index=False)
    return target


def write_network(directory: PathLike, A: AdjacencyTensor) -> Dict[str, Path]:
    """edges.csv, times.csv, nodes.csv (when named) and network.json with the dimensions"""
    out = ensure_directory(directory)
    files = {'edges': write_edge_list(out / "edges.csv", A)}

    times = pd.DataFrame({'t': np.arange(1, A.T + 1), 'stamp': A.times})
    times.to_csv(out / "times.csv", index=False, float_format=FLOAT_FORMAT)
    files['times'] = out / "times.csv"

    if A.node_names is not None:
        pd.DataFrame({'i': np.arange(1, A.N + 1), 'name': A.node_names}).to_csv(out / "nodes.csv", index=False)
        files['nodes'] = out / "nodes.csv"

    files['network'] = write_json(out / "network.json", {'N': A.N, 'K': A.K, 'T': A.T})
    logger.info(f"Wrote network with {int(A.edge_counts().sum())} edges to {out}")
    return files


def write_ground_truth(directory: PathLike, theta: np.ndarray, z: Sequence[int],
                       times: Optional[Sequence[float]] = None) -> Dict[str, Path]:
    """truth_theta.csv (t,layer,i,j,prob over i<j) and truth_z.csv (node,block), 1-based"""
    out = ensure_directory(directory)
    frame = pair_probability_frame(theta, times)
    frame.to_csv(out / "truth_theta.csv", index=False, float_format=FLOAT_FORMAT)

    labels = np.asarray(z, dtype=np.int64)
    pd.DataFrame({'node': np.arange(1, labels.size + 1), 'block': labels + 1}).to_csv(
        out / "truth_z.csv", index=False
    )
    return {'theta': out / "truth_theta.csv", 'z': out / "truth_z.csv"}


def pair_probability_frame(theta: np.ndarray, times: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """Long table (t, layer, i, j, prob) over i < j of theta[i, j, k, t]; t is the stamp when given"""
    N, _, K, T = theta.shape
    rows, cols = upper_pairs(N)
    values = theta[rows, cols]
    stamps = np.arange(1, T + 1, dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)

    pair_count = rows.size
    t_index = np.repeat(np.arange(T), K * pair_count)
    k_index = np.tile(np.repeat(np.arange(K), pair_count), T)
    pair_index = np.tile(np.arange(pair_count), K * T)
    frame = pd.DataFrame({
        't': stamps[t_index],
        'layer': k_index + 1,
        'i': rows[pair_index] + 1,
        'j': cols[pair_index] + 1,
        'prob': values[pair_index, k_index, t_index],
    })
    if times is None:
        frame['t'] = frame['t'].astype(np.int64)
    return frame


# ========== TRACE FILES ==========

class TraceExportService:
    """Writes a posterior trace as a directory of per-group CSV files"""

    def __init__(self, float_format: str = FLOAT_FORMAT):
        self.float_format = float_format

    def _write_group(self, path: Path, iterations: List[int], values: np.ndarray, columns: List[str],
                     integer: bool = False) -> None:
        flat = values.reshape(len(iterations), -1)
        frame = pd.DataFrame(flat + 1 if integer else flat, columns=columns)
        frame.insert(0, 'iteration', iterations)
        frame.to_csv(path, index=False, float_format=self.float_format)

    def write(self, out_dir: PathLike, trace: PosteriorTrace, data_path: Optional[PathLike] = None) -> Path:
        out = ensure_directory(out_dir)
        dims = trace.dims()
        groups = ["mu", "mu_pk", "xbar", "x", "delta", "delta_k", "eta", "z"]

        for group in groups:
            if len(trace):
                values = trace.stack(group)
            else:
                values = np.zeros((0,) + trace_shape(group, dims))
            self._write_group(out / f"{group}.csv", trace.iterations, values,
                              trace_columns(group, dims), integer=(group == "z"))

        if trace.pi:
            groups.append("pi")
            self._write_group(out / "pi.csv", trace.iterations, trace.stack("pi"), trace_columns("pi", dims))

        pd.DataFrame({'iteration': trace.iterations, 'loglik': trace.loglik}).to_csv(
            out / "loglik.csv", index=False, float_format=self.float_format
        )
        write_json(out / "timing.json", trace.timing)

        manifest: Dict[str, Any] = {
            'run_id': generate_run_id(),
            'dims': dims,
            'times': np.asarray(trace.times).tolist(),
            'node_names': trace.node_names,
            'seed': trace.seed,
            'kernels': trace.kernels.as_dict(),
            'a1': trace.a1,
            'a2': trace.a2,
            'iterations': trace.iterations,
            'groups': groups,
            'config': trace.config,
            'data_path': None if data_path is None else str(data_path),
            'timing': trace.timing,
        }
        write_json(out / "manifest.json", manifest)
        logger.info(f"Wrote {len(trace)} draws to {out}")
        return out


def write_trace(out_dir: PathLike, trace: PosteriorTrace, data_path: Optional[PathLike] = None) -> Path:
    """Write a trace directory (manifest.json plus one CSV per parameter group)"""
    return TraceExportService().write(out_dir, trace, data_path)


# ========== PREDICTIONS ==========

def write_predictions(out_dir: PathLike, theta: np.ndarray, stamps: Sequence[float],
                      draws: Sequence[int], impute: bool = False,
                      extra: Optional[Dict[str, Any]] = None) -> Path:
    """preds.csv (t,layer,i,j,prob with t the stamp) and preds_manifest.json"""
    out = ensure_directory(out_dir)
    frame = pair_probability_frame(theta, stamps)
    frame.to_csv(out / "preds.csv", index=False, float_format=FLOAT_FORMAT)

    manifest = {
        'stamps': np.asarray(stamps, dtype=float).tolist(),
        'draws_used': len(draws),
        'draw_indices': list(draws),
        'impute': impute,
        'rows': int(len(frame)),
    }
    manifest.update(extra or {})
    write_json(out / "preds_manifest.json", manifest)
    logger.info(f"Wrote {len(frame)} predictions to {out / 'preds.csv'}")
    return out / "preds.csv"
