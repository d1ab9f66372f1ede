"""
DMBN Toolkit - Block Model Parameters
Latent parameter container and the deterministic model math: block logits,
link probabilities, the Binomial complete-data log-likelihood and the
expansion of block probabilities to node pairs.

Axis conventions: mu [t]; mu_pk [p, k, t]; xbar [p, r, t]; x [p, k, h, t];
logits and probabilities [p, q, k, t]; edge probabilities [i, j, k, t].
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence
import logging

import numpy as np
from scipy.special import expit, log_expit, xlog1py, xlogy

from models.errors import NumericalError
from models.network import SufficientStats
from services.gp_kernels import KernelSpec, rbf_gram
from utils.validators import ValidationResult, validate_positive_real

logger = logging.getLogger(__name__)

_UPPER = np.nextafter(1.0, 0.0)
_LOWER = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class LatentKernels:
    """One RBF kernel per latent group"""

    mu: KernelSpec = field(default_factory=lambda: KernelSpec(0.05))
    mu_p: KernelSpec = field(default_factory=lambda: KernelSpec(0.05))
    xbar: KernelSpec = field(default_factory=lambda: KernelSpec(0.05))
    x: KernelSpec = field(default_factory=lambda: KernelSpec(0.05))

    def as_dict(self) -> Dict[str, Dict[str, float]]:
        return {
            name: {'kappa': spec.kappa, 'jitter': spec.jitter}
            for name, spec in (("mu", self.mu), ("mu_p", self.mu_p), ("xbar", self.xbar), ("x", self.x))
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "LatentKernels":
        return cls(**{name: KernelSpec(**values) for name, values in payload.items()})


@dataclass(frozen=True)
class LatentState:
    """Snapshot of every continuous latent quantity of the block model"""

    mu: np.ndarray
    mu_pk: np.ndarray
    xbar: np.ndarray
    x: np.ndarray
    delta: np.ndarray
    delta_k: np.ndarray
    a1: float = 2.0
    a2: float = 2.0
    kernels: LatentKernels = field(default_factory=LatentKernels)

    def __post_init__(self) -> None:
        for name in ("mu", "mu_pk", "xbar", "x", "delta", "delta_k"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

        result = ValidationResult()
        T = self.mu.shape[-1] if self.mu.ndim == 1 else -1
        B = self.xbar.shape[0] if self.xbar.ndim == 3 else -1
        R = self.delta.size
        K, H = self.delta_k.shape if self.delta_k.ndim == 2 else (-1, -1)

        expected = {
            "mu": (T,),
            "mu_pk": (B, K, T),
            "xbar": (B, R, T),
            "x": (B, K, H, T),
            "delta": (R,),
            "delta_k": (K, H),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                result.add_error(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}", name, "shape_mismatch"
                )
        if np.any(self.delta <= 0) or np.any(self.delta_k <= 0):
            result.add_error("shrinkage gammas must be positive", "delta", "not_positive")
        result.merge(validate_positive_real(self.a1, "a1"))
        result.merge(validate_positive_real(self.a2, "a2"))
        result.raise_if_invalid()

    # Dimensions
    @property
    def B(self) -> int:
        return int(self.xbar.shape[0])

    @property
    def K(self) -> int:
        return int(self.delta_k.shape[0])

    @property
    def T(self) -> int:
        return int(self.mu.size)

    @property
    def R(self) -> int:
        return int(self.delta.size)

    @property
    def H(self) -> int:
        return int(self.delta_k.shape[1])

    @property
    def tau(self) -> np.ndarray:
        """Cross-layer precisions tau_r = prod_{u <= r} delta_u"""
        return np.cumprod(self.delta)

    @property
    def tau_k(self) -> np.ndarray:
        """Within-layer precisions tau_h^k = prod_{v <= h} delta_v^k, shape (K, H)"""
        return np.cumprod(self.delta_k, axis=1)

    def evolve(self, **changes: Any) -> "LatentState":
        """New snapshot with some fields replaced"""
        return replace(self, **changes)

    @classmethod
    def from_prior(cls, n_blocks: int, n_layers: int, times: Sequence[float], n_cross: int, n_within: int,
                   rng: np.random.Generator, kernels: Optional[LatentKernels] = None,
                   a1: float = 2.0, a2: float = 2.0) -> "LatentState":
        """Draw every trajectory from its GP prior with all shrinkage gammas at 1"""
        kernels = kernels or LatentKernels()
        B, K, R, H = n_blocks, n_layers, n_cross, n_within

        mu = rbf_gram(times, kernels.mu).sample_prior(rng)
        mu_pk = rbf_gram(times, kernels.mu_p).sample_prior(rng, size=(B, K))
        xbar = rbf_gram(times, kernels.xbar).sample_prior(rng, size=(B, R))
        x = rbf_gram(times, kernels.x).sample_prior(rng, size=(B, K, H))
        return cls(
            mu=mu, mu_pk=mu_pk, xbar=xbar, x=x,
            delta=np.ones(R), delta_k=np.ones((K, H)),
            a1=a1, a2=a2, kernels=kernels,
        )


@dataclass(frozen=True)
class LogitTensor:
    """Block logits psi[p, q, k, t], symmetric in (p, q)"""

    psi: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.psi)):
            raise NumericalError("non-finite block logits", code="logit_not_finite")


# ========== MODEL MATH ==========

def logits(state: LatentState) -> LogitTensor:
    """Block logits.

    Off-diagonal cells: mu(t) + <xbar_p(t), xbar_q(t)> + <x_p^k(t), x_q^k(t)>.
    Diagonal cells: mu_p^k(t) + sum_r xbar_pr(t), with no within-layer term.
    """
    cross = np.einsum("prt,qrt->pqt", state.xbar, state.xbar)
    within = np.einsum("pkht,qkht->pqkt", state.x, state.x)
    psi = state.mu[None, None, None, :] + cross[:, :, None, :] + within

    blocks = np.arange(state.B)
    psi[blocks, blocks] = state.mu_pk + state.xbar.sum(axis=1)[:, None, :]
    return LogitTensor(psi)


def probabilities(psi: LogitTensor) -> np.ndarray:
    """Logistic map kept strictly inside (0, 1)"""
    return np.clip(expit(psi.psi), _LOWER, _UPPER)


def log_likelihood(pi: np.ndarray, stats: SufficientStats) -> float:
    """Binomial complete-data log-likelihood summed over block pairs q <= p"""
    lower = np.tril(np.ones((stats.B, stats.B), dtype=bool))[:, :, None, None]
    terms = xlogy(stats.y, pi) + xlog1py(stats.n - stats.y, -pi)
    return float(np.sum(terms, where=np.broadcast_to(lower, terms.shape)))


def log_likelihood_from_logits(psi: LogitTensor, stats: SufficientStats) -> float:
    """Same quantity evaluated through log-sigmoids, exact for large |psi|"""
    lower = np.tril(np.ones((stats.B, stats.B), dtype=bool))[:, :, None, None]
    terms = stats.y * log_expit(psi.psi) + (stats.n - stats.y) * log_expit(-psi.psi)
    return float(np.sum(terms, where=np.broadcast_to(lower, terms.shape)))


def edge_probabilities(pi: np.ndarray, z: Sequence[int]) -> np.ndarray:
    """theta[i, j, k, t] = pi[z_i, z_j, k, t] with a structural zero diagonal"""
    labels = np.asarray(z, dtype=np.int64)
    theta = pi[labels][:, labels].copy()
    nodes = np.arange(labels.size)
    theta[nodes, nodes] = 0.0
    return theta
