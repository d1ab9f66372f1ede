"""
DMBN Toolkit - Network Data Model
Dynamic multilayer graphs, block bookkeeping and the Binomial sufficient
statistics n_pq^k(t), y_pq^k(t) consumed by the sampler.

Axis conventions: adjacency is [t, k, i, j]; block statistics are [p, q, k, t].
Assignments are 0-based in memory and 1-based in every file.
"""

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence
import logging

import numpy as np

from utils.validators import (
    ValidationError, ValidationResult, validate_adjacency, validate_assignments, validate_times
)

logger = logging.getLogger(__name__)

PairCounting = Literal["ordered", "unordered"]


def one_hot(z: np.ndarray, n_blocks: int) -> np.ndarray:
    """(N, B) indicator matrix of block memberships"""
    z = np.asarray(z)
    Z = np.zeros((z.size, n_blocks), dtype=np.float64)
    Z[np.arange(z.size), z] = 1.0
    return Z


@dataclass(frozen=True)
class AdjacencyTensor:
    """Observed binary dynamic multilayer graph A[t][k][i][j] plus time stamps"""

    A: np.ndarray
    times: np.ndarray
    node_names: Optional[List[str]] = None

    def __post_init__(self) -> None:
        A = np.ascontiguousarray(self.A, dtype=np.uint8)
        times = np.asarray(self.times, dtype=np.float64)

        result = validate_adjacency(A)
        if result.is_valid:
            result.merge(validate_times(times, expected_length=A.shape[0]))
        if self.node_names is not None and len(self.node_names) != A.shape[2]:
            result.add_error(
                f"node_names has {len(self.node_names)} labels, expected {A.shape[2]}",
                "node_names", "length_mismatch"
            )
        result.raise_if_invalid()

        A.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "times", times)

    @classmethod
    def empty(cls, n_nodes: int, n_layers: int, n_times: int,
              times: Optional[Sequence[float]] = None) -> "AdjacencyTensor":
        """All-zero tensor with default stamps 1..T"""
        stamps = np.arange(1, n_times + 1, dtype=float) if times is None else times
        return cls(np.zeros((n_times, n_layers, n_nodes, n_nodes), dtype=np.uint8), np.asarray(stamps))

    @property
    def N(self) -> int:
        return int(self.A.shape[2])

    @property
    def K(self) -> int:
        return int(self.A.shape[1])

    @property
    def T(self) -> int:
        return int(self.A.shape[0])

    def edge_count(self, k: int, t: int) -> int:
        """Number of undirected edges in layer k at time index t"""
        return int(self.A[t, k].sum() // 2)

    def edge_counts(self) -> np.ndarray:
        """(K, T) undirected edge counts"""
        return (self.A.sum(axis=(2, 3)) // 2).T.astype(np.int64)

    def select_times(self, indices: Sequence[int]) -> "AdjacencyTensor":
        """Sub-tensor restricted to the given time indices"""
        idx = np.asarray(indices, dtype=int)
        return AdjacencyTensor(self.A[idx], self.times[idx], self.node_names)

    def split_holdout(self, holdout_steps: int) -> "tuple[AdjacencyTensor, AdjacencyTensor]":
        """(training, held-out) split keeping the last `holdout_steps` stamps out"""
        if not 0 < holdout_steps < self.T:
            raise ValidationError(
                f"holdout_steps must lie in 1..{self.T - 1}, got {holdout_steps}",
                field="data.holdout_steps", code="out_of_range"
            )
        cut = self.T - holdout_steps
        return self.select_times(range(cut)), self.select_times(range(cut, self.T))


@dataclass
class BlockState:
    """Assignments z (0-based), block probabilities eta and Dirichlet concentration alpha"""

    z: np.ndarray
    eta: np.ndarray
    alpha: np.ndarray

    def __post_init__(self) -> None:
        self.z = np.asarray(self.z, dtype=np.int64)
        self.eta = np.asarray(self.eta, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)

        result = validate_assignments(self.z, self.z.size, self.B)
        if self.alpha.shape != (self.B,) or np.any(self.alpha <= 0):
            result.add_error("alpha must be a positive vector of length B", "alpha", "invalid_alpha")
        if np.any(self.eta < 0) or not np.isclose(self.eta.sum(), 1.0):
            result.add_error("eta must lie on the simplex", "eta", "not_simplex")
        result.raise_if_invalid()

    @classmethod
    def from_assignments(cls, z: Sequence[int], n_blocks: int, alpha: float = 1.0,
                         eta: Optional[np.ndarray] = None) -> "BlockState":
        """Block state with replicated concentration and uniform eta unless given"""
        concentration = np.full(n_blocks, float(alpha))
        probabilities = np.full(n_blocks, 1.0 / n_blocks) if eta is None else eta
        return cls(np.asarray(z, dtype=np.int64), probabilities, concentration)

    @property
    def B(self) -> int:
        return int(self.eta.size)

    @property
    def N(self) -> int:
        return int(self.z.size)

    @property
    def counts(self) -> np.ndarray:
        """n_p = |{i : z_i = p}|"""
        return np.bincount(self.z, minlength=self.B).astype(np.int64)


def pair_totals(counts: np.ndarray, pair_counting: PairCounting = "ordered") -> np.ndarray:
    """n_pq = n_p n_q - n_p 1(p=q); halved on the diagonal in unordered mode"""
    counts = np.asarray(counts, dtype=np.int64)
    n = np.outer(counts, counts)
    n[np.diag_indices_from(n)] -= counts
    if pair_counting == "unordered":
        n[np.diag_indices_from(n)] //= 2
    return n


@dataclass
class SufficientStats:
    """Trial and success counts n[p][q][k][t], y[p][q][k][t]"""

    n: np.ndarray
    y: np.ndarray
    pair_counting: PairCounting = field(default="ordered")

    @property
    def B(self) -> int:
        return int(self.n.shape[0])

    def copy(self) -> "SufficientStats":
        return SufficientStats(self.n.copy(), self.y.copy(), self.pair_counting)

    def move_node(self, neighbour_counts: np.ndarray, old: int, new: int, counts: np.ndarray) -> None:
        """Update in place for one node moving from block `old` to block `new`.

        neighbour_counts[q, k, t] is the number of edges from the node to
        other members of block q; counts are the block sizes after the move.
        """
        if old == new:
            return
        c = neighbour_counts
        self.y[old, :] -= c
        self.y[:, old] -= c
        self.y[new, :] += c
        self.y[:, new] += c
        if self.pair_counting == "unordered":
            self.y[old, old] += c[old]
            self.y[new, new] -= c[new]
        n_matrix = pair_totals(counts, self.pair_counting)
        self.n[...] = n_matrix[:, :, None, None]

    def check(self) -> ValidationResult:
        """Check symmetry, 0 <= y <= n and parity of the diagonal"""
        result = ValidationResult()
        if not (np.array_equal(self.n, self.n.transpose(1, 0, 2, 3))
                and np.array_equal(self.y, self.y.transpose(1, 0, 2, 3))):
            result.add_error("statistics must be symmetric in (p, q)", "stats", "not_symmetric")
        if np.any(self.y < 0) or np.any(self.y > self.n):
            result.add_error("statistics must satisfy 0 <= y <= n", "stats", "out_of_range")
        if self.pair_counting == "ordered":
            diagonal = np.diagonal(self.y, axis1=0, axis2=1)
            if np.any(diagonal % 2):
                result.add_error("within-block counts must be even", "stats", "odd_diagonal")
        return result


def neighbour_block_counts(A: np.ndarray, Z: np.ndarray, node: int) -> np.ndarray:
    """(B, K, T) edge counts from `node` to each block under one-hot Z"""
    # A[:, :, node, :] is (T, K, N); self-loops are zero so the node itself never counts
    counts = np.einsum("tkj,jq->qkt", A[:, :, node, :], Z, optimize=True)
    return np.rint(counts).astype(np.int64)


def block_stats(A: AdjacencyTensor, z: Sequence[int], B: int,
                pair_counting: PairCounting = "ordered") -> SufficientStats:
    """Compute the clustering quantities given the current assignments.

    y sums A over ordered pairs i != j with z_i = p, z_j = q, so within-block
    edges are counted twice; n_pq = n_p n_q - n_p 1(p=q). In unordered mode
    both diagonal quantities are halved.
    """
    labels = np.asarray(z, dtype=np.int64)
    validate_assignments(labels, A.N, B).raise_if_invalid()

    Z = one_hot(labels, B)
    y = np.einsum("ip,tkij,jq->pqkt", Z, A.A.astype(np.float64), Z, optimize=True)
    y = np.rint(y).astype(np.int64)
    if pair_counting == "unordered":
        diagonal = np.arange(B)
        y[diagonal, diagonal] //= 2

    counts = np.bincount(labels, minlength=B)
    n_matrix = pair_totals(counts, pair_counting)
    n = np.broadcast_to(n_matrix[:, :, None, None], y.shape).copy()
    return SufficientStats(n=n, y=y, pair_counting=pair_counting)
