"""
DMBN Toolkit - Polya-Gamma Sampling
Moments and random draws of PG(b, c). Small counts use exact Devroye draws
from the `polyagamma` package; counts at or above a threshold use a
moment-matched normal approximation truncated to the positive half-line.
"""

from typing import Sequence, Union
import logging
import time

import numpy as np
import pandas as pd
from polyagamma import random_polyagamma

from models.errors import NumericalError
from utils.validators import ValidationError

logger = logging.getLogger(__name__)

# Below this |c| the closed forms cancel catastrophically; use series limits.
SMALL_C = 1e-4
NORMAL_RETRY_CAP = 64
DEFAULT_THRESHOLD = 100

Number = Union[float, np.ndarray]


def _check_shape(b: Number) -> np.ndarray:
    shape = np.asarray(b, dtype=np.float64)
    if np.any(shape <= 0) or not np.all(np.isfinite(shape)):
        raise ValidationError("PG shape b must be positive", field="b", code="domain_error")
    return shape


def _half_tanh_terms(c: np.ndarray):
    """alpha = tanh(c/2) and alpha^2 - 1 evaluated through exp(-|c|)"""
    decay = np.exp(-np.abs(c))
    alpha = np.sign(c) * -np.expm1(-np.abs(c)) / (1.0 + decay)
    alpha_sq_minus_one = -4.0 * decay / (1.0 + decay) ** 2
    return alpha, alpha_sq_minus_one


def pg_mean(b: Number, c: Number) -> Number:
    """E[PG(b, c)] = b/(2c) tanh(c/2), with limit b/4 at c = 0"""
    shape = _check_shape(b)
    tilt = np.asarray(c, dtype=np.float64)
    small = np.abs(tilt) < SMALL_C

    safe = np.where(small, 1.0, tilt)
    alpha, _ = _half_tanh_terms(safe)
    exact = shape / (2.0 * safe) * alpha
    series = shape / 4.0 * (1.0 - tilt ** 2 / 12.0)
    result = np.where(small, series, exact)
    return float(result) if result.ndim == 0 else result


def pg_variance(b: Number, c: Number) -> Number:
    """Var[PG(b, c)] = b(alpha^2 - 1)/(4c^2) + b alpha/(2c^3), with limit b/24 at c = 0"""
    shape = _check_shape(b)
    tilt = np.asarray(c, dtype=np.float64)
    small = np.abs(tilt) < SMALL_C

    safe = np.where(small, 1.0, tilt)
    alpha, alpha_sq_minus_one = _half_tanh_terms(safe)
    exact = shape * alpha_sq_minus_one / (4.0 * safe ** 2) + shape * alpha / (2.0 * safe ** 3)
    series = shape * (1.0 / 24.0 - tilt ** 2 / 120.0)
    result = np.where(small, series, exact)
    return float(result) if result.ndim == 0 else result


# ========== SAMPLERS ==========

def pg_sample_exact(b: float, c: float, rng: np.random.Generator) -> float:
    """Sum of b independent PG(1, c) draws; b = 0 is the point mass at zero"""
    if b < 0 or int(b) != b:
        raise ValidationError("exact PG sampling needs a nonnegative integer b", field="b", code="domain_error")
    if b == 0:
        logger.debug("Degenerate PG(0, c) draw")
        return 0.0
    draws = random_polyagamma(1, c, size=int(b), method="devroye", random_state=rng)
    return float(np.sum(draws))


def _normal_regime(b: np.ndarray, c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mean = np.asarray(pg_mean(b, c), dtype=np.float64)
    sd = np.sqrt(np.asarray(pg_variance(b, c), dtype=np.float64))
    draws = mean + sd * rng.standard_normal(mean.shape)

    pending = draws <= 0
    retries = 0
    while np.any(pending):
        if retries == NORMAL_RETRY_CAP:
            index = int(np.flatnonzero(pending.ravel())[0])
            raise NumericalError(
                "normal PG approximation kept producing nonpositive draws",
                code="pg_rejection_cap",
                details={'b': float(b.ravel()[index]), 'c': float(c.ravel()[index]), 'retries': retries},
            )
        draws[pending] = mean[pending] + sd[pending] * rng.standard_normal(int(pending.sum()))
        pending = draws <= 0
        retries += 1
    return draws


def pg_sample(b: float, c: float, rng: np.random.Generator, threshold: int = DEFAULT_THRESHOLD) -> float:
    """PG(b, c) draw: exact below `threshold`, moment-matched normal at or above it"""
    if b < 0:
        raise ValidationError("PG shape b must be nonnegative", field="b", code="domain_error")
    if b == 0:
        return 0.0
    if b < threshold:
        return pg_sample_exact(b, c, rng)
    return float(_normal_regime(np.asarray([b], dtype=float), np.asarray([c], dtype=float), rng)[0])


def pg_sample_cells(counts: np.ndarray, logits: np.ndarray, rng: np.random.Generator,
                    threshold: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Vectorised PG(n, psi) draws over cells of equal-shaped count and logit arrays.

    Empty cells get 0. Cells in the exact regime use the Devroye sampler with
    integer shape n, which is distributed as the n-fold sum of PG(1, psi).
    """
    b = np.asarray(counts)
    c = np.asarray(logits, dtype=np.float64)
    omega = np.zeros(c.shape, dtype=np.float64)

    exact = (b > 0) & (b < threshold)
    if np.any(exact):
        omega[exact] = random_polyagamma(
            b[exact].astype(np.float64), c[exact], method="devroye", random_state=rng
        )

    normal = b >= threshold
    if np.any(normal):
        omega[normal] = _normal_regime(b[normal].astype(np.float64), c[normal], rng)
    return omega


# ========== APPROXIMATION CHECK ==========

def normal_approximation_error(b_values: Sequence[int], c_values: Sequence[float], n_draws: int,
                               rng: np.random.Generator) -> pd.DataFrame:
    """Exact against normal-regime draws over a (b, c) grid.

    One row per pair with the closed-form moments, the relative error of each
    sampler's empirical mean and variance, and the seconds each sampler took.
    """
    if n_draws < 2:
        raise ValidationError("need at least two draws per grid point", field="n_draws", code="too_small")
    rows = []
    for b in b_values:
        if b <= 0 or int(b) != b:
            raise ValidationError("grid shapes must be positive integers", field="b", code="domain_error")
        for c in c_values:
            shape = np.full(n_draws, float(b))
            tilt = np.full(n_draws, float(c))
            mean, variance = pg_mean(b, c), pg_variance(b, c)

            started = time.perf_counter()
            exact = random_polyagamma(shape, tilt, method="devroye", random_state=rng)
            exact_seconds = time.perf_counter() - started

            started = time.perf_counter()
            normal = _normal_regime(shape, tilt, rng)
            normal_seconds = time.perf_counter() - started

            rows.append({
                'b': int(b), 'c': float(c), 'mean': mean, 'variance': variance,
                'exact_mean_error': abs(exact.mean() / mean - 1.0),
                'normal_mean_error': abs(normal.mean() / mean - 1.0),
                'exact_variance_error': abs(exact.var(ddof=1) / variance - 1.0),
                'normal_variance_error': abs(normal.var(ddof=1) / variance - 1.0),
                'exact_seconds': exact_seconds, 'normal_seconds': normal_seconds,
            })
    logger.info(f"Compared PG samplers on {len(rows)} grid points with {n_draws} draws each")
    return pd.DataFrame(rows)
