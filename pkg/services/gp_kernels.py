"""
DMBN Toolkit - Gaussian Process Kernels
RBF Gram matrices with stabilised Cholesky factors, Gaussian draws from
precision form and noise-free conditional (kriging) extrapolation.

Every latent trajectory in the model has prior covariance c * (G + jitter*I)
for a scale c and an RBF Gram G. Posterior draws are taken in the whitened
coordinates of the Cholesky factor so that G is never inverted explicitly;
very smooth kernels leave G numerically singular.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple, Union
import logging

import numpy as np
from scipy import linalg

from models.errors import NumericalError
from services.cache_service import cached
from utils.validators import ValidationError, validate_positive_real, validate_times

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-8
MAX_JITTER_ESCALATIONS = 3

ArrayLike = Union[Sequence[float], np.ndarray]


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel k(t, t') = exp(-kappa (t - t')^2) with diagonal jitter"""

    kappa: float
    jitter: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        result = validate_positive_real(self.kappa, "kappa")
        result.merge(validate_positive_real(self.jitter, "jitter"))
        result.raise_if_invalid()
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "jitter", float(self.jitter))

    def cross(self, left: ArrayLike, right: ArrayLike) -> np.ndarray:
        """Kernel matrix between two sets of stamps"""
        a = np.asarray(left, dtype=np.float64)
        b = np.asarray(right, dtype=np.float64)
        return np.exp(-self.kappa * np.subtract.outer(a, b) ** 2)


@dataclass(frozen=True)
class GramCache:
    """Gram matrix on a time grid and the lower Cholesky factor of G + jitter*I"""

    times: np.ndarray
    gram: np.ndarray
    factor: np.ndarray
    jitter_used: float

    @property
    def T(self) -> int:
        return int(self.times.size)

    def whiten(self, values: np.ndarray) -> np.ndarray:
        """L^{-1} v along the last axis"""
        values = np.asarray(values, dtype=np.float64)
        flat = values.reshape(-1, self.T)
        solved = linalg.solve_triangular(self.factor, flat.T, lower=True, check_finite=False)
        return solved.T.reshape(values.shape)

    def quad_form(self, values: np.ndarray) -> np.ndarray:
        """v^T (G + jitter*I)^{-1} v along the last axis"""
        return np.sum(self.whiten(values) ** 2, axis=-1)

    def color(self, white: np.ndarray) -> np.ndarray:
        """L u along the last axis"""
        return np.asarray(white) @ self.factor.T

    def sample_prior(self, rng: np.random.Generator, size: Tuple[int, ...] = (),
                     scale: Union[float, np.ndarray] = 1.0) -> np.ndarray:
        """Draws from N(0, scale * (G + jitter*I)), shape size + (T,)"""
        draws = self.color(rng.standard_normal(tuple(size) + (self.T,)))
        return np.sqrt(scale) * draws


def _condition_number(matrix: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(matrix))
    except np.linalg.LinAlgError:
        return float("inf")


@cached("rbf_gram")
def _factorised_gram(times: np.ndarray, kappa: float, jitter: float) -> GramCache:
    gram = np.exp(-kappa * np.subtract.outer(times, times) ** 2)
    identity = np.eye(times.size)

    level = jitter
    for attempt in range(MAX_JITTER_ESCALATIONS + 1):
        level = jitter * 10 ** attempt
        try:
            factor = linalg.cholesky(gram + level * identity, lower=True)
        except linalg.LinAlgError:
            logger.warning(f"Gram factorisation failed (kappa={kappa}, jitter={level:.1e}), escalating")
            continue

        for array in (times, gram, factor):
            array.setflags(write=False)
        return GramCache(times=times, gram=gram, factor=factor, jitter_used=level)

    raise NumericalError(
        "RBF Gram matrix could not be factorised",
        code="gram_not_pd",
        details={'kappa': kappa, 'jitter': level, 'condition': _condition_number(gram)},
    )


def rbf_gram(times: ArrayLike, spec: KernelSpec) -> GramCache:
    """Gram matrix G_ij = exp(-kappa (t_i - t_j)^2) and its stabilised factor.

    The jitter is escalated by a factor 10 up to three times before giving up.
    Results are memoised per (times, kappa, jitter).
    """
    stamps = np.array(times, dtype=np.float64)
    validate_times(stamps).raise_if_invalid()
    return _factorised_gram(stamps, spec.kappa, spec.jitter)


# ========== GAUSSIAN SAMPLING ==========

def sample_gaussian_precision(precision: np.ndarray, linear: np.ndarray,
                              rng: np.random.Generator) -> np.ndarray:
    """One draw from N(P^{-1} h, P^{-1}) using a Cholesky factor and triangular solves"""
    P = np.asarray(precision, dtype=np.float64)
    h = np.asarray(linear, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or h.shape != (P.shape[0],):
        raise ValidationError(
            f"precision must be square and match the linear term, got {P.shape} and {h.shape}",
            field="precision", code="shape_mismatch"
        )

    try:
        L = linalg.cholesky(P, lower=True)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalError(
            "precision matrix is not positive definite",
            code="precision_not_pd",
            details={'size': P.shape[0], 'condition': _condition_number(P), 'reason': str(e)},
        ) from e

    mean = linalg.cho_solve((L, True), h, check_finite=False)
    noise = rng.standard_normal(P.shape[0])
    # L^{-T} eps has covariance (L L^T)^{-1}
    return mean + linalg.solve_triangular(L, noise, lower=True, trans="T", check_finite=False)


def sample_gp_posterior(prior_factor: np.ndarray, data_precision: np.ndarray, linear: np.ndarray,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw f with precision D + (M M^T)^{-1} and linear term h.

    Uses f = M u with u ~ N((I + M^T D M)^{-1} M^T h, (I + M^T D M)^{-1}).
    `data_precision` may be a full matrix or the vector of a diagonal one.
    """
    M = np.asarray(prior_factor, dtype=np.float64)
    D = np.asarray(data_precision, dtype=np.float64)
    weighted = M.T * D if D.ndim == 1 else M.T @ D
    precision = weighted @ M
    precision[np.diag_indices_from(precision)] += 1.0
    white = sample_gaussian_precision(precision, M.T @ linear, rng)
    return M @ white


def scaled_block_factor(scales: np.ndarray, gram: GramCache) -> np.ndarray:
    """Factor of diag(scales) (x) (G + jitter*I) in coordinate-major order (index r*T + t)"""
    return np.kron(np.diag(np.sqrt(np.asarray(scales, dtype=np.float64))), gram.factor)


# ========== CONDITIONAL PREDICTION ==========

def psd_factor(covariance: np.ndarray) -> np.ndarray:
    """Symmetric square-root factor F with F F^T = covariance, negative eigenvalues clipped"""
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


def kriging_weights(train_times: ArrayLike, test_times: ArrayLike,
                    spec: KernelSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(W, C) such that the conditional mean is v @ W and the unit-scale covariance is C.

    W = (K_tt + jitter*I)^{-1} K_t*; C = K_** - K_*t (K_tt + jitter*I)^{-1} K_t*,
    symmetrised and clipped to the positive semi-definite cone.
    """
    test = np.asarray(test_times, dtype=np.float64)
    if test.ndim != 1 or test.size == 0:
        raise ValidationError("test_times must be a non-empty vector", field="test_times", code="invalid_shape")

    gram = rbf_gram(train_times, spec)
    projected = linalg.solve_triangular(gram.factor, spec.cross(gram.times, test), lower=True)
    weights = linalg.solve_triangular(gram.factor, projected, lower=True, trans="T")

    covariance = spec.cross(test, test) - projected.T @ projected
    covariance = 0.5 * (covariance + covariance.T)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    if eigenvalues.min() < 0:
        covariance = (eigenvectors * np.clip(eigenvalues, 0.0, None)) @ eigenvectors.T
    return weights, covariance


def gp_conditional(train_times: ArrayLike, train_values: np.ndarray, test_times: ArrayLike,
                   spec: KernelSpec, scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free kriging of one or many trajectories to new stamps.

    train_values may carry leading batch axes, the last axis indexing
    train_times. The covariance is shared across the batch; `scale` multiplies
    the prior covariance (e.g. an inverse shrinkage precision) and leaves the
    mean unchanged.
    """
    weights, covariance = kriging_weights(train_times, test_times, spec)
    values = np.asarray(train_values, dtype=np.float64)
    if values.shape[-1:] != (weights.shape[0],):
        raise ValidationError(
            f"train_values last axis must have length {weights.shape[0]}, got shape {values.shape}",
            field="train_values", code="shape_mismatch"
        )
    return values @ weights, scale * covariance
