"""
DMBN Toolkit - Network Metrics
Densities, expected degrees, estimation error, ROC curves and block-recovery
summaries computed from node-pair probabilities, observed networks and
posterior traces.

theta tensors are indexed [i, j, k, t]; binary networks are AdjacencyTensor
instances ([t, k, i, j]).
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union
import logging

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform
from sklearn.metrics import adjusted_rand_score, roc_auc_score, roc_curve

from models.dmbn import logits, probabilities
from models.errors import EvaluationError
from models.network import AdjacencyTensor
from services.gibbs_service import PosteriorTrace
from utils.helpers import upper_pairs

logger = logging.getLogger(__name__)


def _pair_count(n_nodes: int) -> int:
    return n_nodes * (n_nodes - 1) // 2


def _check_theta(theta: np.ndarray) -> np.ndarray:
    values = np.asarray(theta, dtype=np.float64)
    if values.ndim != 4 or values.shape[0] != values.shape[1]:
        raise EvaluationError(f"theta must have shape (N, N, K, T), got {values.shape}", code="shape_mismatch")
    return values


# ========== NETWORK SUMMARIES ==========

def density(values: Union[np.ndarray, AdjacencyTensor], k: Optional[int] = None,
            t: Optional[int] = None) -> Union[float, np.ndarray]:
    """Expected (theta) or observed (AdjacencyTensor) density D^k(t).

    Returns the (K, T) matrix when k and t are omitted.
    """
    if isinstance(values, AdjacencyTensor):
        pairs = _pair_count(values.N)
        table = values.edge_counts() / pairs if pairs else np.zeros((values.K, values.T))
    else:
        theta = _check_theta(values)
        rows, cols = upper_pairs(theta.shape[0])
        pairs = rows.size
        table = theta[rows, cols].sum(axis=0) / pairs if pairs else np.zeros(theta.shape[2:])
    if k is None and t is None:
        return table
    if k is None or t is None:
        return table[k] if t is None else table[:, t]
    return float(table[k, t])


def expected_degree(theta: np.ndarray, i: Optional[int] = None, k: Optional[int] = None,
                    t: Optional[int] = None) -> Union[float, np.ndarray]:
    """d_i^k(t) = sum over j != i of theta[i, j, k, t]; the (N, K, T) array when no index is given"""
    values = _check_theta(theta)
    degrees = values.sum(axis=1) - np.einsum("iikt->ikt", values)
    if i is None:
        return degrees
    if k is None or t is None:
        return degrees[i]
    return float(degrees[i, k, t])


def observed_degree(A: AdjacencyTensor) -> np.ndarray:
    """(N, K, T) node degrees of a binary network"""
    return A.A.sum(axis=3).transpose(2, 1, 0).astype(np.float64)


# ========== ESTIMATION ERROR ==========

def mae(theta_hat: np.ndarray, theta_true: np.ndarray) -> float:
    """Mean absolute error over node pairs i < j, layers and times"""
    estimate = _check_theta(theta_hat)
    truth = _check_theta(theta_true)
    if estimate.shape != truth.shape:
        raise EvaluationError(
            f"shape mismatch: estimate {estimate.shape} vs truth {truth.shape}",
            code="shape_mismatch",
        )
    rows, cols = upper_pairs(estimate.shape[0])
    if rows.size == 0:
        return 0.0
    return float(np.mean(np.abs(estimate[rows, cols] - truth[rows, cols])))


def relative_mae(theta_a: np.ndarray, theta_b: np.ndarray, theta_true: np.ndarray) -> float:
    """MAE of model a divided by MAE of model b"""
    denominator = mae(theta_b, theta_true)
    if denominator == 0:
        raise EvaluationError("reference model has zero MAE", code="zero_division")
    return mae(theta_a, theta_true) / denominator


# ========== ROC ==========

@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def as_rows(self) -> Dict[str, np.ndarray]:
        return {'fpr': self.fpr, 'tpr': self.tpr, 'threshold': self.thresholds}


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """ROC curve by threshold sweep and the rank AUC (ties count one half)"""
    y = np.asarray(labels).astype(np.int64).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.shape != s.shape:
        raise EvaluationError(f"{s.size} scores for {y.size} labels", code="shape_mismatch")
    if not np.isin(y, (0, 1)).all():
        raise EvaluationError("labels must be binary", code="invalid_labels")
    if np.unique(y).size < 2:
        raise EvaluationError("AUC is undefined when only one class is present", code="single_class",
                              details={'positives': int(y.sum()), 'total': int(y.size)})

    fpr, tpr, thresholds = roc_curve(y, s)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=float(roc_auc_score(y, s)))


def held_out_pairs(theta: np.ndarray, A: AdjacencyTensor, layer: Optional[int] = None):
    """(scores, labels) over node pairs i < j for every (k, t) cell, or one layer"""
    values = _check_theta(theta)
    if values.shape != (A.N, A.N, A.K, A.T):
        raise EvaluationError(
            f"predictions {values.shape} do not match the network (N={A.N}, K={A.K}, T={A.T})",
            code="shape_mismatch",
        )
    rows, cols = upper_pairs(A.N)
    scores = values[rows, cols]  # (pairs, K, T)
    labels = A.A[:, :, rows, cols].transpose(2, 1, 0)
    if layer is not None:
        scores, labels = scores[:, layer], labels[:, layer]
    return scores.ravel(), labels.ravel()


# ========== BLOCK RECOVERY ==========

def coclustering(draws: Union[PosteriorTrace, np.ndarray]) -> np.ndarray:
    """C_ij = fraction of draws placing i and j in the same block"""
    z = np.stack(draws.draws["z"]) if isinstance(draws, PosteriorTrace) else np.atleast_2d(draws)
    if z.shape[0] == 0:
        raise EvaluationError("co-clustering needs at least one assignment draw", code="empty_trace")
    same = z[:, :, None] == z[:, None, :]
    return same.mean(axis=0)


def consensus_partition(C: np.ndarray, n_clusters: int) -> np.ndarray:
    """Average-linkage clustering of 1 - C cut at n_clusters; labels 0.. in order of first appearance"""
    matrix = np.asarray(C, dtype=np.float64)
    N = matrix.shape[0]
    if n_clusters < 1:
        raise EvaluationError("n_clusters must be at least 1", code="too_small")
    if n_clusters >= N:
        return np.arange(N, dtype=np.int64)

    dissimilarity = np.clip(1.0 - 0.5 * (matrix + matrix.T), 0.0, 1.0)
    np.fill_diagonal(dissimilarity, 0.0)
    tree = linkage(squareform(dissimilarity, checks=False), method="average")
    raw = fcluster(tree, t=n_clusters, criterion="maxclust")

    labels, first = np.unique(raw, return_index=True)
    relabel = {labels[position]: rank for rank, position in enumerate(np.argsort(first))}
    return np.array([relabel[value] for value in raw], dtype=np.int64)


def adjusted_rand_index(p1: Sequence[int], p2: Sequence[int]) -> float:
    if len(p1) != len(p2):
        raise EvaluationError(f"partitions of different sizes ({len(p1)} and {len(p2)})", code="shape_mismatch")
    return float(adjusted_rand_score(p1, p2))


# ========== POSTERIOR SUMMARIES ==========

def draw_probabilities(trace: PosteriorTrace, index: int) -> np.ndarray:
    """Block probabilities pi[p, q, k, t] of one kept draw"""
    if trace.pi:
        return trace.pi[index]
    return probabilities(logits(trace.latent_state(index)))


def draw_density(pi: np.ndarray, z: Sequence[int]) -> np.ndarray:
    """(K, T) expected density of one draw from block probabilities and assignments"""
    labels = np.asarray(z, dtype=np.int64)
    pairs = _pair_count(labels.size)
    if pairs == 0:
        return np.zeros(pi.shape[2:])
    n = np.bincount(labels, minlength=pi.shape[0]).astype(np.float64)
    # sum over unordered pairs in different blocks plus within-block pairs
    total = np.einsum("p,q,pqkt->kt", n, n, pi) - np.einsum("p,ppkt->kt", n, pi)
    return 0.5 * total / pairs


def draw_degree(pi: np.ndarray, z: Sequence[int]) -> np.ndarray:
    """(N, K, T) expected degrees of one draw"""
    labels = np.asarray(z, dtype=np.int64)
    n = np.bincount(labels, minlength=pi.shape[0]).astype(np.float64)
    per_block = np.einsum("q,pqkt->pkt", n, pi) - np.einsum("ppkt->pkt", pi)
    return per_block[labels]


def posterior_density(trace: PosteriorTrace) -> np.ndarray:
    """(D, K, T) expected densities, one per kept draw"""
    result = np.zeros((len(trace), trace.n_layers, trace.n_times))
    for d in range(len(trace)):
        result[d] = draw_density(draw_probabilities(trace, d), trace.assignments(d))
    return result


def posterior_degree(trace: PosteriorTrace) -> np.ndarray:
    """(N, K, T) posterior mean expected degrees"""
    result = np.zeros((trace.n_nodes, trace.n_layers, trace.n_times))
    for d in range(len(trace)):
        result += draw_degree(draw_probabilities(trace, d), trace.assignments(d))
    return result / max(len(trace), 1)


def posterior_theta(trace: PosteriorTrace) -> np.ndarray:
    """Posterior mean node-pair probabilities theta[i, j, k, t] over the kept draws"""
    theta = np.zeros((trace.n_nodes, trace.n_nodes, trace.n_layers, trace.n_times))
    for d in range(len(trace)):
        z = trace.assignments(d)
        theta += draw_probabilities(trace, d)[z][:, z]
    theta /= max(len(trace), 1)
    idx = np.arange(trace.n_nodes)
    theta[idx, idx] = 0.0
    return theta


# ========== REPORT ==========

@dataclass
class MetricsReport:
    """Metrics of one evaluation, serialisable to metrics.json"""

    density: Optional[np.ndarray] = None
    degree: Optional[np.ndarray] = None
    observed_density: Optional[np.ndarray] = None
    mae: Optional[float] = None
    relative_mae: Optional[float] = None
    relative_time: Optional[float] = None
    roc_layers: Dict[int, RocCurve] = field(default_factory=dict)
    roc_all: Optional[RocCurve] = None
    coclustering: Optional[np.ndarray] = None
    partition: Optional[np.ndarray] = None
    ari: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {}
        if self.density is not None:
            payload['density'] = np.asarray(self.density).tolist()
        if self.observed_density is not None:
            payload['observed_density'] = np.asarray(self.observed_density).tolist()
        if self.degree is not None:
            payload['degree'] = np.asarray(self.degree).tolist()
        if self.mae is not None:
            payload['mae'] = self.mae
        if self.relative_mae is not None:
            payload['relative_mae'] = self.relative_mae
        if self.relative_time is not None:
            payload['relative_time'] = self.relative_time
        if self.roc_layers:
            payload['auc_layers'] = {str(k + 1): curve.auc for k, curve in self.roc_layers.items()}
        if self.roc_all is not None:
            payload['auc'] = self.roc_all.auc
        if self.partition is not None:
            payload['clusters'] = (np.asarray(self.partition) + 1).tolist()
        if self.ari is not None:
            payload['ari'] = self.ari
        if self.notes:
            payload['notes'] = self.notes
        return payload


def evaluate_predictions(theta: np.ndarray, truth_network: Optional[AdjacencyTensor] = None,
                         truth_theta: Optional[np.ndarray] = None,
                         baseline_theta: Optional[np.ndarray] = None) -> MetricsReport:
    """Score predicted node-pair probabilities against a held-out network and/or true probabilities.

    With `baseline_theta` the MAE of the predictions is also reported relative
    to the baseline's MAE on the same truth probabilities.
    """
    if truth_network is None and truth_theta is None:
        raise EvaluationError("evaluation needs a truth network or truth probabilities", code="no_truth")

    values = _check_theta(theta)
    report = MetricsReport(density=density(values), degree=expected_degree(values))

    if truth_theta is not None:
        report.mae = mae(values, truth_theta)
        if baseline_theta is not None:
            report.relative_mae = relative_mae(values, _check_theta(baseline_theta), truth_theta)
    elif baseline_theta is not None:
        raise EvaluationError("a baseline comparison needs truth probabilities", code="no_truth")

    if truth_network is not None:
        if truth_network.K != values.shape[2]:
            raise EvaluationError(
                f"layer count mismatch: predictions have {values.shape[2]}, truth has {truth_network.K}",
                code="layer_mismatch",
            )
        report.observed_density = density(truth_network)
        scores, labels = held_out_pairs(values, truth_network)
        report.roc_all = roc_auc(scores, labels)
        for k in range(truth_network.K):
            layer_scores, layer_labels = held_out_pairs(values, truth_network, layer=k)
            try:
                report.roc_layers[k] = roc_auc(layer_scores, layer_labels)
            except EvaluationError as e:
                report.notes.append(f"layer {k + 1}: {e.message}")
                logger.warning(f"Skipping ROC for layer {k + 1}: {e.message}")
    return report
