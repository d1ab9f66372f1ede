"""
DMBN Toolkit - Synthetic Network Generator
Simulates dynamic multilayer block networks whose latent trajectories follow
smoothed constant, seasonal or trend patterns, returning the data together
with the true node-pair probabilities and block assignments.
"""

from dataclasses import dataclass
from typing import Optional
import logging

import numpy as np

from config import SynthConfig
from models.dmbn import LatentKernels, LatentState, edge_probabilities, logits, probabilities
from models.network import AdjacencyTensor
from services.forecast_service import sample_future_edges
from services.gp_kernels import KernelSpec
from utils.helpers import fresh_seed, make_rng

logger = logging.getLogger(__name__)

PATTERNS = ("constant", "seasonal", "trend")

# Parameter ranges of the three pattern families
LEVEL_RANGE = (-2.0, 2.0)
SEASONAL_AMPLITUDE_RANGE = (0.5, 2.0)
TREND_DRIFT_RANGE = (-2.0, 2.0)


@dataclass
class SynthResult:
    """Generated network plus ground truth"""

    data: AdjacencyTensor
    theta: np.ndarray
    z: np.ndarray
    latent: LatentState
    pi: np.ndarray
    seed: int


def gram_smoother(times: np.ndarray, kappa: float) -> np.ndarray:
    """Row-normalised RBF Gram matrix used as a linear smoother"""
    gram = KernelSpec(kappa).cross(times, times)
    return gram / gram.sum(axis=1, keepdims=True)


def pattern_trajectory(kind: str, times: np.ndarray, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Raw (unsmoothed) trajectory of one pattern family"""
    elapsed = times - times[0]
    if kind == "constant":
        level = rng.uniform(*LEVEL_RANGE)
        raw = np.full(times.size, level)
    elif kind == "seasonal":
        amplitude = rng.uniform(*SEASONAL_AMPLITUDE_RANGE)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        period = max(times.size / 2.0, 1.0)
        raw = amplitude * np.sin(2.0 * np.pi * elapsed / period + phase)
    elif kind == "trend":
        level = rng.uniform(*LEVEL_RANGE)
        drift = rng.uniform(*TREND_DRIFT_RANGE)
        horizon = elapsed[-1] if elapsed[-1] > 0 else 1.0
        raw = level + drift * elapsed / horizon
    else:
        raise ValueError(f"Unknown pattern {kind!r}")
    return scale * raw


def _assign_blocks(cfg: SynthConfig, n_blocks: int, rng: np.random.Generator) -> np.ndarray:
    if cfg.no_blocks:
        return np.arange(cfg.n_nodes, dtype=np.int64)
    if cfg.assignment == "dirichlet":
        eta = rng.dirichlet(np.full(n_blocks, cfg.dirichlet_alpha))
        return rng.choice(n_blocks, size=cfg.n_nodes, p=eta).astype(np.int64)
    return rng.permutation(np.arange(cfg.n_nodes) % n_blocks).astype(np.int64)


class SynthGenerator:
    """Draws every latent trajectory from the configured pattern mix"""

    def __init__(self, cfg: SynthConfig, seed: Optional[int] = None):
        self.cfg = cfg
        self.seed = seed if seed is not None else (cfg.seed if cfg.seed is not None else fresh_seed())
        self.rng = make_rng(self.seed)
        self.times = np.arange(1, cfg.n_times + 1, dtype=np.float64)
        self.smoother = gram_smoother(self.times, cfg.kappa)
        self.mix = np.asarray(cfg.patterns.probabilities())

    def trajectories(self, shape: tuple, scale: float = 1.0) -> np.ndarray:
        """Smoothed pattern trajectories, one per leading index"""
        count = int(np.prod(shape, dtype=np.int64))
        kinds = self.rng.choice(len(PATTERNS), size=count, p=self.mix)
        raw = np.stack([
            pattern_trajectory(PATTERNS[kind], self.times, self.rng, scale * self.cfg.amplitude_scale)
            for kind in kinds
        ]) if count else np.zeros((0, self.times.size))
        smoothed = raw @ self.smoother.T
        return smoothed.reshape(tuple(shape) + (self.times.size,))

    def generate(self) -> SynthResult:
        cfg = self.cfg
        n_blocks = cfg.n_nodes if cfg.no_blocks else cfg.n_blocks
        z = _assign_blocks(cfg, n_blocks, self.rng)

        spec = KernelSpec(cfg.kappa)
        # inner products over R (or H) coordinates keep unit scale
        latent = LatentState(
            mu=self.trajectories(()),
            mu_pk=self.trajectories((n_blocks, cfg.n_layers)),
            xbar=self.trajectories((n_blocks, cfg.n_cross), scale=1.0 / np.sqrt(cfg.n_cross)),
            x=self.trajectories((n_blocks, cfg.n_layers, cfg.n_within), scale=1.0 / np.sqrt(cfg.n_within)),
            delta=np.ones(cfg.n_cross),
            delta_k=np.ones((cfg.n_layers, cfg.n_within)),
            kernels=LatentKernels(mu=spec, mu_p=spec, xbar=spec, x=spec),
        )

        pi = probabilities(logits(latent))
        theta = edge_probabilities(pi, z)
        A = sample_future_edges(pi, z, self.rng)
        data = AdjacencyTensor(A, self.times)

        logger.info(
            f"Generated N={cfg.n_nodes} B={n_blocks} K={cfg.n_layers} T={cfg.n_times}: "
            f"{int(data.edge_counts().sum())} edges (seed {self.seed})"
        )
        return SynthResult(data=data, theta=theta, z=z, latent=latent, pi=pi, seed=self.seed)


def generate(cfg: SynthConfig, seed: Optional[int] = None) -> SynthResult:
    """Generate a synthetic network and its ground truth"""
    return SynthGenerator(cfg, seed=seed).generate()
