"""
DMBN Toolkit - Import Service
Readers for edge lists, time stamps, node names, sampler trace directories,
predictions and ground truth, with row-level error reporting for edge lists.
"""

from pathlib import Path
from typing import Any, Dict, IO, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
import pandas as pd

from models.dmbn import LatentKernels
from models.errors import DMBNError
from models.network import AdjacencyTensor
from services.export_service import TRACE_LAYOUT, trace_shape
from services.gibbs_service import PosteriorTrace
from utils.helpers import read_json
from utils.validators import ValidationError, validate_times

logger = logging.getLogger(__name__)

Source = Union[str, Path, IO[str]]

EDGE_COLUMNS = ("t", "layer", "i", "j")
ENCODINGS = ("utf-8", "latin-1", "cp1252")


class ImportResult:
    """Result of an import operation"""

    def __init__(self) -> None:
        self.success_count = 0
        self.error_count = 0
        self.warning_count = 0
        self.errors: List[Dict[str, Any]] = []
        self.warnings: List[Dict[str, Any]] = []

    def add_error(self, message: str, row_number: Optional[int] = None, field: Optional[str] = None) -> None:
        """Add import error"""
        self.error_count += 1
        self.errors.append({'message': message, 'row_number': row_number, 'field': field})

    def add_warning(self, message: str, row_number: Optional[int] = None, field: Optional[str] = None) -> None:
        """Add import warning"""
        self.warning_count += 1
        self.warnings.append({'message': message, 'row_number': row_number, 'field': field})

    def add_success(self, count: int = 1) -> None:
        self.success_count += count

    @property
    def is_successful(self) -> bool:
        return self.error_count == 0


class EdgeListError(DMBNError):
    """Edge list rejected; carries every offending row"""

    exit_code = 2

    def __init__(self, result: ImportResult):
        self.result = result
        first = result.errors[0] if result.errors else {'message': "edge list rejected", 'row_number': None}
        row = f" (row {first['row_number']})" if first.get('row_number') is not None else ""
        message = f"{result.error_count} invalid edge-list row(s); first: {first['message']}{row}"
        super().__init__(message, code="invalid_edge_list", details={'errors': result.errors[:20]})


def read_csv_file(source: Source, columns: Sequence[str], encoding: str = "utf-8") -> pd.DataFrame:
    """Read a CSV with required columns as strings; an empty source yields an empty frame"""
    try:
        if isinstance(source, (str, Path)):
            for enc in dict.fromkeys((encoding,) + ENCODINGS):
                try:
                    frame = pd.read_csv(source, dtype=str, skipinitialspace=True, encoding=enc)
                    break
                except UnicodeDecodeError:
                    continue
            else:
                raise ValidationError(f"Could not decode {source} with any supported encoding",
                                      field="encoding", code="undecodable")
        else:
            frame = pd.read_csv(source, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame({name: pd.Series(dtype=str) for name in columns})

    frame.columns = [str(col).strip().lower() for col in frame.columns]
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise ValidationError(f"CSV is missing column(s) {missing}", field=",".join(missing), code="missing_columns")
    return frame


def _integer_columns(frame: pd.DataFrame, columns: Sequence[str],
                     result: ImportResult) -> Tuple[pd.DataFrame, np.ndarray]:
    """Integer-coerced columns plus a mask of rows where every value parsed"""
    values = pd.DataFrame(index=frame.index)
    parsed = np.ones(len(frame), dtype=bool)
    for name in columns:
        numeric = pd.to_numeric(frame[name], errors="coerce")
        bad = numeric.isna().to_numpy() | (numeric.fillna(0) % 1 != 0).to_numpy()
        for position in np.flatnonzero(bad):
            result.add_error(f"{name}={frame[name].iloc[position]!r} is not an integer",
                             row_number=int(position) + 2, field=name)
        parsed &= ~bad
        values[name] = numeric.fillna(0).astype(np.int64)
    return values, parsed


# ========== EDGE LISTS ==========

class EdgeListImporter:
    """Builds a symmetric adjacency tensor from (t, layer, i, j) rows"""

    def __init__(self, n_nodes: int, n_layers: int, n_times: int):
        self.limits = {'t': n_times, 'layer': n_layers, 'i': n_nodes, 'j': n_nodes}
        self.N, self.K, self.T = n_nodes, n_layers, n_times

    def build(self, frame: pd.DataFrame) -> Tuple[np.ndarray, ImportResult]:
        result = ImportResult()
        values, ok = _integer_columns(frame, EDGE_COLUMNS, result)

        # one aggregated range error per row
        outside = {name: ~values[name].between(1, limit).to_numpy() for name, limit in self.limits.items()}
        any_outside = np.zeros(len(frame), dtype=bool)
        for mask in outside.values():
            any_outside |= mask
        for position in np.flatnonzero(ok & any_outside):
            offending = [
                f"{name}={values[name].iloc[position]} not in 1..{self.limits[name]}"
                for name in EDGE_COLUMNS if outside[name][position]
            ]
            result.add_error("index out of range: " + ", ".join(offending),
                             row_number=int(position) + 2,
                             field=",".join(name for name in EDGE_COLUMNS if outside[name][position]))
        in_range = ok & ~any_outside

        loops = ok & (values["i"] == values["j"]).to_numpy()
        for position in np.flatnonzero(loops):
            result.add_error(f"self-loop on node {values['i'].iloc[position]}",
                             row_number=int(position) + 2, field="j")

        keep = in_range & ~loops
        t = values["t"].to_numpy()[keep] - 1
        k = values["layer"].to_numpy()[keep] - 1
        i = values["i"].to_numpy()[keep] - 1
        j = values["j"].to_numpy()[keep] - 1

        pairs = pd.DataFrame({'t': t, 'k': k, 'lo': np.minimum(i, j), 'hi': np.maximum(i, j)})
        repeated = pairs.duplicated().to_numpy()
        row_numbers = np.flatnonzero(keep) + 2
        for row in row_numbers[repeated]:
            result.add_warning("duplicate edge ignored", row_number=int(row))

        A = np.zeros((self.T, self.K, self.N, self.N), dtype=np.uint8)
        A[t, k, i, j] = 1
        A[t, k, j, i] = 1
        result.add_success(int(keep.sum()))
        return A, result


def load_edge_list(stream: Source, n_nodes: int, n_layers: int, n_times: int,
                   times: Optional[Sequence[float]] = None,
                   node_names: Optional[List[str]] = None) -> AdjacencyTensor:
    """Adjacency tensor from a t,layer,i,j CSV (1-based); any invalid row rejects the file"""
    frame = read_csv_file(stream, EDGE_COLUMNS)
    return _edge_frame_to_tensor(frame, n_nodes, n_layers, n_times, times, node_names)


def _edge_frame_to_tensor(frame: pd.DataFrame, n_nodes: int, n_layers: int, n_times: int,
                          times: Optional[Sequence[float]], node_names: Optional[List[str]]) -> AdjacencyTensor:
    A, result = EdgeListImporter(n_nodes, n_layers, n_times).build(frame)
    if not result.is_successful:
        logger.error(f"Edge list rejected with {result.error_count} error(s)")
        raise EdgeListError(result)
    if result.warning_count:
        logger.warning(f"{result.warning_count} duplicate edge row(s) ignored")

    stamps = np.arange(1, n_times + 1, dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
    logger.info(f"Loaded {result.success_count} edge rows: N={n_nodes} K={n_layers} T={n_times}")
    return AdjacencyTensor(A, stamps, node_names)


def load_times(source: Source, n_times: Optional[int] = None) -> np.ndarray:
    """Stamps from a t,stamp CSV, ordered by t; t must cover 1..T exactly"""
    frame = read_csv_file(source, ("t", "stamp"))
    index = pd.to_numeric(frame["t"], errors="coerce")
    stamps = pd.to_numeric(frame["stamp"], errors="coerce")
    if index.isna().any() or stamps.isna().any():
        raise ValidationError("times file holds non-numeric values", field="times", code="not_numeric")

    order = np.argsort(index.to_numpy())
    expected = np.arange(1, len(frame) + 1)
    if not np.array_equal(index.to_numpy()[order], expected):
        raise ValidationError("times file must list t = 1..T once each", field="times.t", code="bad_index")

    values = stamps.to_numpy(dtype=np.float64)[order]
    validate_times(values, expected_length=n_times, field_name="times").raise_if_invalid()
    return values


def load_node_names(source: Source, n_nodes: Optional[int] = None) -> List[str]:
    """Names from an i,name CSV, ordered by i"""
    frame = read_csv_file(source, ("i", "name"))
    index = pd.to_numeric(frame["i"], errors="coerce")
    if index.isna().any() or not np.array_equal(np.sort(index.to_numpy()), np.arange(1, len(frame) + 1)):
        raise ValidationError("node file must list i = 1..N once each", field="nodes.i", code="bad_index")
    if n_nodes is not None and len(frame) != n_nodes:
        raise ValidationError(f"node file has {len(frame)} names, expected {n_nodes}",
                              field="nodes", code="length_mismatch")
    ordered = frame.assign(i=index.astype(np.int64)).sort_values("i")
    return [str(name) for name in ordered["name"]]


def _infer_dims(frame: pd.DataFrame) -> Dict[str, int]:
    numeric = frame[list(EDGE_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    if numeric.empty or numeric.isna().all().any():
        raise ValidationError("cannot infer dimensions from an empty edge list; provide network.json",
                              field="data", code="unknown_dims")
    return {
        'N': int(numeric[["i", "j"]].max().max()),
        'K': int(numeric["layer"].max()),
        'T': int(numeric["t"].max()),
    }


def load_network(path: Union[str, Path]) -> AdjacencyTensor:
    """Network from a directory (edges.csv plus optional side files) or an edge-list path.

    Dimensions come from network.json when present; otherwise they are the
    largest indices found in the edge list, the time file and the node file.
    """
    target = Path(path)
    edges = target / "edges.csv" if target.is_dir() else target
    folder = edges.parent
    if not edges.exists():
        raise FileNotFoundError(f"edge list not found: {edges}")

    frame = read_csv_file(edges, EDGE_COLUMNS)
    times = load_times(folder / "times.csv") if (folder / "times.csv").exists() else None
    names = load_node_names(folder / "nodes.csv") if (folder / "nodes.csv").exists() else None

    if (folder / "network.json").exists():
        dims = {key: int(value) for key, value in read_json(folder / "network.json").items() if key in ("N", "K", "T")}
    else:
        dims = _infer_dims(frame) if len(frame) else {}
        if times is not None:
            dims['T'] = max(dims.get('T', 0), times.size)
        if names is not None:
            dims['N'] = max(dims.get('N', 0), len(names))
        if set(dims) != {"N", "K", "T"}:
            raise ValidationError("cannot infer dimensions; provide network.json", field="data", code="unknown_dims")

    return _edge_frame_to_tensor(frame, dims['N'], dims['K'], dims['T'], times, names)


# ========== TRACE DIRECTORIES ==========

def read_trace(directory: Union[str, Path]) -> PosteriorTrace:
    """PosteriorTrace from a directory written by export_service.write_trace"""
    folder = Path(directory)
    manifest_path = folder / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"trace manifest not found: {manifest_path}")
    try:
        manifest = read_json(manifest_path)
    except json.JSONDecodeError as e:
        raise ValidationError(f"trace manifest is not valid JSON: {e}", field="manifest", code="invalid_json") from e

    dims = manifest["dims"]
    trace = PosteriorTrace(
        times=np.asarray(manifest["times"], dtype=np.float64),
        n_nodes=dims["N"], n_layers=dims["K"], n_blocks=dims["B"],
        n_cross=dims["R"], n_within=dims["H"],
        kernels=LatentKernels.from_dict(manifest["kernels"]),
        a1=manifest.get("a1", 2.0), a2=manifest.get("a2", 2.0),
        seed=manifest.get("seed"), config=manifest.get("config", {}),
        node_names=manifest.get("node_names"),
        timing=manifest.get("timing", {}),
    )
    trace.iterations = [int(it) for it in manifest["iterations"]]

    for group in manifest.get("groups", list(TRACE_LAYOUT)[:-1]):
        frame = pd.read_csv(folder / f"{group}.csv", float_precision="round_trip")
        if frame["iteration"].tolist() != trace.iterations:
            raise ValidationError(f"{group}.csv iterations disagree with the manifest",
                                  field=group, code="iteration_mismatch")
        values = frame.drop(columns="iteration").to_numpy()
        shaped = values.reshape((len(frame),) + trace_shape(group, dims))
        if group == "z":
            shaped = shaped.astype(np.int64) - 1
        rows = [np.array(row) for row in shaped]
        if group == "pi":
            trace.pi = rows
        else:
            trace.draws[group] = rows

    if (folder / "loglik.csv").exists():
        trace.loglik = pd.read_csv(folder / "loglik.csv", float_precision="round_trip")["loglik"].astype(float).tolist()
    logger.info(f"Read {len(trace)} draws from {folder}")
    return trace


# ========== PREDICTIONS AND GROUND TRUTH ==========

def _pair_table(path: Union[str, Path], columns: Sequence[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise ValidationError(f"{path} is missing column(s) {missing}", field=",".join(missing),
                              code="missing_columns")
    return frame


def pair_table_to_theta(frame: pd.DataFrame, n_nodes: int, value: str = "prob") -> Tuple[np.ndarray, np.ndarray]:
    """(theta[i, j, k, t], stamps) from a long (t, layer, i, j, value) table over i < j"""
    stamps = np.unique(frame["t"].to_numpy(dtype=np.float64))
    t_index = np.searchsorted(stamps, frame["t"].to_numpy(dtype=np.float64))
    K = int(frame["layer"].max()) if len(frame) else 0
    theta = np.zeros((n_nodes, n_nodes, K, stamps.size))
    i = frame["i"].to_numpy(dtype=np.int64) - 1
    j = frame["j"].to_numpy(dtype=np.int64) - 1
    k = frame["layer"].to_numpy(dtype=np.int64) - 1
    probs = frame[value].to_numpy(dtype=np.float64)
    theta[i, j, k, t_index] = probs
    theta[j, i, k, t_index] = probs
    return theta, stamps


def read_predictions(path: Union[str, Path]) -> pd.DataFrame:
    """preds.csv as a frame (t, layer, i, j, prob); a directory is resolved to its preds.csv"""
    target = Path(path)
    return _pair_table(target / "preds.csv" if target.is_dir() else target, ("t", "layer", "i", "j", "prob"))


def read_prediction_run(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray, Dict[str, Any]]:
    """(theta, stamps, manifest) of a predict output; the manifest is empty when absent"""
    preds = read_predictions(path)
    target = Path(path)
    manifest_path = (target if target.is_dir() else target.parent) / "preds_manifest.json"
    manifest = read_json(manifest_path) if manifest_path.exists() else {}
    n_nodes = int(manifest.get('n_nodes') or preds["j"].max())
    theta, stamps = pair_table_to_theta(preds, n_nodes)
    return theta, stamps, manifest


def fit_wall_clock(manifest: Dict[str, Any]) -> Optional[float]:
    """Wall-clock seconds of the fit behind a prediction run, from its trace's timing.json"""
    trace_dir = manifest.get('trace')
    if not trace_dir:
        return None
    timing_path = Path(trace_dir) / "timing.json"
    if not timing_path.exists():
        logger.warning(f"No timing.json under {trace_dir}")
        return None
    seconds = read_json(timing_path).get('wall_clock_seconds')
    return None if seconds is None else float(seconds)


def read_truth_theta(path: Union[str, Path]) -> pd.DataFrame:
    target = Path(path)
    return _pair_table(target / "truth_theta.csv" if target.is_dir() else target, ("t", "layer", "i", "j", "prob"))


def read_truth_z(path: Union[str, Path]) -> np.ndarray:
    """0-based assignments from truth_z.csv"""
    target = Path(path)
    frame = _pair_table(target / "truth_z.csv" if target.is_dir() else target, ("node", "block"))
    return frame.sort_values("node")["block"].to_numpy(dtype=np.int64) - 1
