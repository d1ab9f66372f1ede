"""
DMBN Toolkit - Forecast Service
Edge prediction at unobserved stamps. Each posterior draw's latent
trajectories are extrapolated by sampling their Gaussian-process
conditionals, assembled into block probabilities and pooled over draws into
node-pair probabilities. Also draws binary networks from probabilities.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence
import logging

import numpy as np

from models.dmbn import LatentKernels, LatentState, edge_probabilities, logits, probabilities
from models.errors import ConfigError
from models.network import AdjacencyTensor
from services.gibbs_service import PosteriorTrace
from services.gp_kernels import KernelSpec, kriging_weights, psd_factor
from utils.validators import ValidationError, validate_times

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionSpec:
    """Target stamps t* and the trace draws used for prediction"""

    stamps: np.ndarray
    draws_to_use: Optional[Sequence[int]] = None
    impute: bool = False

    def __post_init__(self) -> None:
        stamps = np.asarray(self.stamps, dtype=np.float64)
        validate_times(stamps, field_name="stamps").raise_if_invalid()
        object.__setattr__(self, "stamps", stamps)

    @classmethod
    def from_horizon(cls, train_times: np.ndarray, horizon: int, **kwargs) -> "PredictionSpec":
        """The next `horizon` stamps continuing the training grid's last spacing"""
        if horizon < 1:
            raise ValidationError("horizon must be at least 1", field="horizon", code="too_small")
        times = np.asarray(train_times, dtype=np.float64)
        spacing = float(times[-1] - times[-2]) if times.size > 1 else 1.0
        return cls(times[-1] + spacing * np.arange(1, horizon + 1), **kwargs)

    def check_against(self, train_times: np.ndarray) -> None:
        """Forecast stamps must avoid the training grid unless imputing"""
        if self.impute:
            return
        overlap = np.intersect1d(self.stamps, np.asarray(train_times, dtype=np.float64))
        if overlap.size:
            raise ValidationError(
                f"prediction stamps {overlap.tolist()} overlap the training stamps; use impute mode",
                field="stamps", code="overlap"
            )


@dataclass
class ForecastResult:
    """Per-draw block probabilities and assignments at t* and the pooled node-pair probabilities"""

    stamps: np.ndarray
    draws: List[int]
    pi: np.ndarray
    z: np.ndarray
    theta: np.ndarray
    impute: bool = False


class _GroupExtrapolator:
    """Kriging operator of one latent group from the training grid to t*"""

    def __init__(self, train_times: np.ndarray, stamps: np.ndarray, spec: KernelSpec):
        self.weights, covariance = kriging_weights(train_times, stamps, spec)
        self.factor = psd_factor(covariance)

    def sample(self, values: np.ndarray, rng: np.random.Generator,
               scale: Optional[np.ndarray] = None) -> np.ndarray:
        """Conditional draw for every leading index of `values`; `scale` broadcasts over them"""
        mean = values @ self.weights
        noise = rng.standard_normal(mean.shape) @ self.factor.T
        if scale is not None:
            noise = noise * np.sqrt(scale)[..., None]
        return mean + noise


def extrapolate_state(latent: LatentState, train_times: np.ndarray, stamps: np.ndarray,
                      rng: np.random.Generator,
                      extrapolators: Optional[dict] = None) -> LatentState:
    """Sample every latent trajectory of one draw at the new stamps"""
    kernels = latent.kernels
    ops = extrapolators or _build_extrapolators(train_times, stamps, kernels)
    return latent.evolve(
        mu=ops["mu"].sample(latent.mu, rng),
        mu_pk=ops["mu_p"].sample(latent.mu_pk, rng),
        xbar=ops["xbar"].sample(latent.xbar, rng, scale=1.0 / latent.tau),
        x=ops["x"].sample(latent.x, rng, scale=1.0 / latent.tau_k),
    )


def _build_extrapolators(train_times: np.ndarray, stamps: np.ndarray, kernels: LatentKernels) -> dict:
    return {
        'mu': _GroupExtrapolator(train_times, stamps, kernels.mu),
        'mu_p': _GroupExtrapolator(train_times, stamps, kernels.mu_p),
        'xbar': _GroupExtrapolator(train_times, stamps, kernels.xbar),
        'x': _GroupExtrapolator(train_times, stamps, kernels.x),
    }


def predict_edge_probs(trace: PosteriorTrace, spec: PredictionSpec, kernels: LatentKernels,
                       rng: np.random.Generator) -> ForecastResult:
    """Block probabilities pi(t*) per draw and node-pair probabilities pooled over draws"""
    if len(trace) == 0:
        raise ValidationError("trace holds no draws", field="trace", code="empty_trace")
    if kernels != trace.kernels:
        raise ConfigError(
            "prediction kernels differ from the kernels used for fitting",
            code="kernel_mismatch",
            details={'fitted': trace.kernels.as_dict(), 'requested': kernels.as_dict()},
        )

    train_times = np.asarray(trace.times, dtype=np.float64)
    spec.check_against(train_times)
    draws = list(range(len(trace))) if spec.draws_to_use is None else [int(d) for d in spec.draws_to_use]
    logger.info(f"Predicting {spec.stamps.size} stamps from {len(draws)} draws")

    extrapolators = _build_extrapolators(train_times, spec.stamps, kernels)
    pi_draws, z_draws = [], []
    theta = np.zeros((trace.n_nodes, trace.n_nodes, trace.n_layers, spec.stamps.size))
    for draw in draws:
        future = extrapolate_state(trace.latent_state(draw), train_times, spec.stamps, rng, extrapolators)
        pi = probabilities(logits(future))
        z = trace.assignments(draw)
        theta += edge_probabilities(pi, z)
        pi_draws.append(pi)
        z_draws.append(z)

    theta /= len(draws)
    return ForecastResult(
        stamps=spec.stamps, draws=draws, pi=np.stack(pi_draws), z=np.stack(z_draws), theta=theta,
        impute=spec.impute,
    )


def sample_future_edges(pi: np.ndarray, z: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Binary tensor A_u[t, k, i, j] ~ Bernoulli(pi[z_i, z_j, k, t]), symmetric, zero diagonal"""
    theta = edge_probabilities(pi, z).transpose(3, 2, 0, 1)
    T, K, N, _ = theta.shape
    upper = np.triu(np.ones((N, N), dtype=bool), k=1)
    draws = (rng.random(theta.shape) < theta) & upper
    edges = draws | np.swapaxes(draws, 2, 3)
    return edges.astype(np.uint8)


def simulate_adjacency(latent: LatentState, z: Sequence[int], times: Sequence[float],
                       rng: np.random.Generator, node_names: Optional[List[str]] = None) -> AdjacencyTensor:
    """Posterior-predictive network drawn from one latent state and assignment"""
    pi = probabilities(logits(latent))
    return AdjacencyTensor(sample_future_edges(pi, z, rng), np.asarray(times), node_names)
