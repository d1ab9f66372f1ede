"""
DMBN Toolkit - Gibbs Sampler Service
Posterior sampler for the dynamic multilayer block model. One iteration runs
the ten conditional updates in a fixed order:

    1 block probabilities eta        6 cross-layer shrinkage delta
    2 Polya-Gamma auxiliaries omega  7 within-layer shrinkage delta_k
    3 between-block mean mu          8 within-block means mu_pk
    4 cross-layer coordinates xbar   9 block probabilities pi
    5 within-layer coordinates x    10 block assignments z (annealed scan)

Gaussian updates are drawn in the whitened coordinates of the prior Cholesky
factor (see services.gp_kernels.sample_gp_posterior).
"""

import math
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union
import logging

import numpy as np
from tqdm import tqdm

from config import GibbsConfig, KernelsConfig, runtime_config
from models.dmbn import (
    LatentKernels, LatentState, LogitTensor, log_likelihood, logits, probabilities
)
from models.errors import NumericalError
from models.network import (
    AdjacencyTensor, BlockState, SufficientStats, block_stats, neighbour_block_counts, one_hot
)
from services.gp_kernels import GramCache, KernelSpec, rbf_gram, sample_gp_posterior, scaled_block_factor
from services.polya_gamma import DEFAULT_THRESHOLD, pg_sample_cells
from utils.formatters import format_duration
from utils.helpers import StepTimer, fresh_seed, make_rng, resolve_thread_count, substream
from utils.validators import ValidationError, ValidationResult, validate_assignments

logger = logging.getLogger(__name__)

Result = TypeVar("Result")

PARAMETER_GROUPS = ("mu", "mu_pk", "xbar", "x", "delta", "delta_k", "eta", "z")


def latent_kernels(kernels: KernelsConfig) -> LatentKernels:
    """Kernel specifications of the four latent groups"""
    return LatentKernels(
        mu=KernelSpec(kernels.mu, kernels.jitter),
        mu_p=KernelSpec(kernels.mu_p, kernels.jitter),
        xbar=KernelSpec(kernels.xbar, kernels.jitter),
        x=KernelSpec(kernels.x, kernels.jitter),
    )


# ========== SAMPLER TYPES ==========

@dataclass
class PGAux:
    """Polya-Gamma auxiliaries omega[p, q, k, t]"""

    omega: np.ndarray

    def check(self, stats: SufficientStats) -> ValidationResult:
        result = ValidationResult()
        if np.any(self.omega < 0):
            result.add_error("omega must be nonnegative", "omega", "negative")
        if not np.array_equal(self.omega, self.omega.transpose(1, 0, 2, 3)):
            result.add_error("omega must be symmetric in (p, q)", "omega", "not_symmetric")
        if np.any(self.omega[stats.n == 0] != 0):
            result.add_error("omega must vanish on empty cells", "omega", "nonzero_empty_cell")
        return result


@dataclass
class AssignmentPosterior:
    """Full conditional assignment probabilities gamma for the scanned nodes"""

    nodes: np.ndarray
    gamma: np.ndarray


@dataclass
class PosteriorTrace:
    """Thinned post-burn-in draws of every parameter group"""

    times: np.ndarray
    n_nodes: int
    n_layers: int
    n_blocks: int
    n_cross: int
    n_within: int
    kernels: LatentKernels = field(default_factory=LatentKernels)
    a1: float = 2.0
    a2: float = 2.0
    seed: Optional[int] = None
    config: Dict[str, Any] = field(default_factory=dict)
    node_names: Optional[List[str]] = None
    iterations: List[int] = field(default_factory=list)
    draws: Dict[str, List[np.ndarray]] = field(default_factory=lambda: {name: [] for name in PARAMETER_GROUPS})
    pi: List[np.ndarray] = field(default_factory=list)
    loglik: List[float] = field(default_factory=list)
    timing: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.iterations)

    @property
    def n_times(self) -> int:
        return int(np.asarray(self.times).size)

    def dims(self) -> Dict[str, int]:
        return {
            'N': self.n_nodes, 'K': self.n_layers, 'T': self.n_times,
            'B': self.n_blocks, 'R': self.n_cross, 'H': self.n_within,
        }

    def append(self, iteration: int, latent: LatentState, block: BlockState, loglik: float,
               pi: Optional[np.ndarray] = None) -> None:
        """Record one draw"""
        self.iterations.append(int(iteration))
        for name in ("mu", "mu_pk", "xbar", "x", "delta", "delta_k"):
            self.draws[name].append(np.array(getattr(latent, name)))
        self.draws["eta"].append(np.array(block.eta))
        self.draws["z"].append(np.array(block.z))
        self.loglik.append(float(loglik))
        if pi is not None:
            self.pi.append(np.array(pi))

    def stack(self, name: str) -> np.ndarray:
        """All draws of one parameter group stacked on a leading axis"""
        if name == "loglik":
            return np.asarray(self.loglik, dtype=np.float64)
        if name == "pi":
            return np.stack(self.pi)
        return np.stack(self.draws[name])

    def latent_state(self, index: int) -> LatentState:
        return LatentState(
            mu=self.draws["mu"][index], mu_pk=self.draws["mu_pk"][index],
            xbar=self.draws["xbar"][index], x=self.draws["x"][index],
            delta=self.draws["delta"][index], delta_k=self.draws["delta_k"][index],
            a1=self.a1, a2=self.a2, kernels=self.kernels,
        )

    def assignments(self, index: int) -> np.ndarray:
        return self.draws["z"][index]

    def select(self, indices: Sequence[int]) -> "PosteriorTrace":
        """Trace restricted to a subset of draws"""
        picked = [int(i) for i in indices]
        subset = PosteriorTrace(
            times=self.times, n_nodes=self.n_nodes, n_layers=self.n_layers, n_blocks=self.n_blocks,
            n_cross=self.n_cross, n_within=self.n_within, kernels=self.kernels, a1=self.a1, a2=self.a2,
            seed=self.seed, config=self.config, node_names=self.node_names, timing=self.timing,
        )
        subset.iterations = [self.iterations[i] for i in picked]
        subset.draws = {name: [values[i] for i in picked] for name, values in self.draws.items()}
        subset.pi = [self.pi[i] for i in picked] if self.pi else []
        subset.loglik = [self.loglik[i] for i in picked] if self.loglik else []
        return subset


# ========== STEP 1: BLOCK PROBABILITIES ==========

def dirichlet_parameters(block: BlockState) -> np.ndarray:
    """Posterior Dirichlet concentration alpha + n"""
    return block.alpha + block.counts


def update_eta(block: BlockState, rng: np.random.Generator) -> BlockState:
    eta = rng.dirichlet(dirichlet_parameters(block))
    return BlockState(block.z, eta, block.alpha)


# ========== STEP 2: AUGMENTATION ==========

def update_omega(psi: LogitTensor, stats: SufficientStats, rng: np.random.Generator,
                 threshold: int = DEFAULT_THRESHOLD,
                 streams: Optional[Sequence[np.random.Generator]] = None,
                 executor: Optional[Executor] = None) -> PGAux:
    """omega_pq^k(t) ~ PG(n_pq^k(t), psi_pq^k(t)) over cells p <= q, filled symmetrically.

    With `streams` (one generator per time index) each time slice is drawn
    from its own stream, optionally on `executor`, so results do not depend
    on the degree of parallelism.
    """
    upper = np.triu_indices(stats.B)
    counts = stats.n[upper]
    tilts = psi.psi[upper]

    if streams is None:
        cells = pg_sample_cells(counts, tilts, rng, threshold)
    else:
        def draw(t: int) -> np.ndarray:
            return pg_sample_cells(counts[..., t], tilts[..., t], streams[t], threshold)

        indices = range(counts.shape[-1])
        columns = list(executor.map(draw, indices)) if executor is not None else [draw(t) for t in indices]
        cells = np.stack(columns, axis=-1)

    omega = np.zeros(stats.n.shape, dtype=np.float64)
    omega[upper] = cells
    omega[upper[1], upper[0]] = cells
    return PGAux(omega)


def _pg_offsets(stats: SufficientStats) -> np.ndarray:
    return stats.y - stats.n / 2.0


# ========== STEPS 3-5: GAUSSIAN PROCESS BLOCKS ==========

def update_mu_global(latent: LatentState, stats: SufficientStats, aux: PGAux, gram: GramCache,
                     rng: np.random.Generator) -> np.ndarray:
    """Between-block mean mu(t) from the off-diagonal cells p > q"""
    lower = np.tril(np.ones((stats.B, stats.B), dtype=bool), k=-1)
    omega = aux.omega[lower]
    kappa = _pg_offsets(stats)[lower]
    cross = np.einsum("prt,qrt->pqt", latent.xbar, latent.xbar)[lower]
    within = np.einsum("pkht,qkht->pqkt", latent.x, latent.x)[lower]

    precision = omega.sum(axis=(0, 1))
    linear = (kappa - omega * (cross[:, None, :] + within)).sum(axis=(0, 1))
    return sample_gp_posterior(gram.factor, precision, linear, rng)


def _time_block_precision(blocks: np.ndarray) -> np.ndarray:
    """Embed per-time D x D blocks into a (D*T) x (D*T) coordinate-major matrix"""
    T, D, _ = blocks.shape
    full = np.zeros((D, T, D, T), dtype=np.float64)
    steps = np.arange(T)
    full[:, steps, :, steps] = blocks
    return full.reshape(D * T, D * T)


def update_xbar(latent: LatentState, stats: SufficientStats, aux: PGAux, gram: GramCache,
                rng: np.random.Generator) -> np.ndarray:
    """Cross-layer coordinates, one block at a time.

    For block p the regression rows are the cells (p, q), q != p, with
    regressor xbar_q(t) and offset mu(t) + <x_p^k(t), x_q^k(t)>, plus the
    diagonal cell with regressor (1, ..., 1) and offset mu_p^k(t).
    """
    xbar = latent.xbar.copy()
    B, R, T = xbar.shape
    kappa = _pg_offsets(stats)
    omega = aux.omega
    within = np.einsum("pkht,qkht->pqkt", latent.x, latent.x)
    factor = scaled_block_factor(1.0 / latent.tau, gram)

    for p in range(B):
        others = np.arange(B) != p
        weight = omega[p].sum(axis=1)
        residual = (kappa[p] - omega[p] * (latent.mu + within[p])).sum(axis=1)
        neighbours = xbar[others]

        blocks = np.einsum("qt,qrt,qst->trs", weight[others], neighbours, neighbours)
        blocks += weight[p][:, None, None]
        linear = np.einsum("qt,qrt->rt", residual[others], neighbours)
        linear += (kappa[p, p] - omega[p, p] * latent.mu_pk[p]).sum(axis=0)

        draw = sample_gp_posterior(factor, _time_block_precision(blocks), linear.reshape(R * T), rng)
        xbar[p] = draw.reshape(R, T)
    return xbar


def update_x_within(latent: LatentState, stats: SufficientStats, aux: PGAux, gram: GramCache,
                    rng: np.random.Generator) -> np.ndarray:
    """Within-layer coordinates, per layer and block; diagonal cells carry no regressor"""
    x = latent.x.copy()
    B, K, H, T = x.shape
    kappa = _pg_offsets(stats)
    omega = aux.omega
    cross = np.einsum("prt,qrt->pqt", latent.xbar, latent.xbar)

    for k in range(K):
        factor = scaled_block_factor(1.0 / latent.tau_k[k], gram)
        for p in range(B):
            others = np.arange(B) != p
            weight = omega[p, others, k]
            residual = kappa[p, others, k] - weight * (latent.mu + cross[p, others])
            neighbours = x[others, k]

            blocks = np.einsum("qt,qht,qgt->thg", weight, neighbours, neighbours)
            linear = np.einsum("qt,qht->ht", residual, neighbours)

            draw = sample_gp_posterior(factor, _time_block_precision(blocks), linear.reshape(H * T), rng)
            x[p, k] = draw.reshape(H, T)
    return x


# ========== STEPS 6-7: SHRINKAGE ==========

def gamma_parameters(delta: np.ndarray, sums: np.ndarray, units: int, a1: float, a2: float,
                     index: int) -> Tuple[float, float]:
    """(shape, rate) of the conditional of delta[index] under multiplicative shrinkage.

    `sums[m]` is sum_p f_pm^T K^{-1} f_pm for coordinate m and `units` the
    number of scalar entries per coordinate (blocks times time points).
    """
    tau = np.cumprod(delta)
    partial = tau[index:] / delta[index]
    rate = 1.0 + 0.5 * float(np.sum(partial * sums[index:]))
    shape = (a1 if index == 0 else a2) + units * (delta.size - index) / 2.0
    return shape, rate


def _shrinkage_sweep(delta: np.ndarray, sums: np.ndarray, units: int, a1: float, a2: float,
                     rng: np.random.Generator) -> np.ndarray:
    updated = np.array(delta, dtype=np.float64)
    for index in range(updated.size):
        shape, rate = gamma_parameters(updated, sums, units, a1, a2, index)
        updated[index] = rng.gamma(shape, 1.0 / rate)
    return updated


def update_shrinkage_cross(latent: LatentState, gram: GramCache, rng: np.random.Generator) -> np.ndarray:
    sums = gram.quad_form(latent.xbar).sum(axis=0)
    return _shrinkage_sweep(latent.delta, sums, latent.B * latent.T, latent.a1, latent.a2, rng)


def update_shrinkage_within(latent: LatentState, gram: GramCache, rng: np.random.Generator) -> np.ndarray:
    sums = gram.quad_form(latent.x).sum(axis=0)
    return np.stack([
        _shrinkage_sweep(latent.delta_k[k], sums[k], latent.B * latent.T, latent.a1, latent.a2, rng)
        for k in range(latent.K)
    ])


# ========== STEP 8: WITHIN-BLOCK MEANS ==========

def update_mu_within(latent: LatentState, stats: SufficientStats, aux: PGAux, gram: GramCache,
                     rng: np.random.Generator) -> np.ndarray:
    blocks = np.arange(latent.B)
    omega = aux.omega[blocks, blocks]
    kappa = _pg_offsets(stats)[blocks, blocks]
    offsets = latent.xbar.sum(axis=1)

    mu_pk = np.empty_like(latent.mu_pk)
    for p in range(latent.B):
        for k in range(latent.K):
            linear = kappa[p, k] - omega[p, k] * offsets[p]
            mu_pk[p, k] = sample_gp_posterior(gram.factor, omega[p, k], linear, rng)
    return mu_pk


# ========== STEP 10: ASSIGNMENTS ==========

def scan_schedule(iteration: int, total: int, f_min: float = 0.1, decay: float = 5.0) -> float:
    """Fraction of nodes revisited at an iteration: max(f_min, exp(-decay * iteration / total))"""
    if not 0 <= iteration < total:
        raise ValidationError(f"iteration must lie in 0..{total - 1}", field="iteration", code="out_of_range")
    return max(f_min, math.exp(-decay * iteration / total))


def draw_scan_set(fraction: float, n_nodes: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted uniform subset of ceil(fraction * N) nodes"""
    size = min(n_nodes, math.ceil(round(fraction * n_nodes, 9)))
    return np.sort(rng.choice(n_nodes, size=size, replace=False))


def update_assignments(A: AdjacencyTensor, block: BlockState, stats: SufficientStats, pi: np.ndarray,
                       scan_set: Sequence[int], rng: np.random.Generator
                       ) -> Tuple[BlockState, AssignmentPosterior]:
    """Sequential categorical updates of z over the scan set.

    log gamma_ip = log eta_p + sum_{q,k,t} [c_q log pi_pq + (m_q - c_q) log(1 - pi_pq)]
    where c_q counts edges from i into block q and m_q the other members of q.
    `stats` is updated in place as nodes move.
    """
    nodes = np.asarray(scan_set, dtype=np.int64)
    z = block.z.copy()
    B = block.B
    Z = one_hot(z, B)
    counts = np.bincount(z, minlength=B).astype(np.int64)

    log_rest = np.log1p(-pi)
    contrast = np.log(pi) - log_rest
    rest_totals = log_rest.sum(axis=(2, 3))
    with np.errstate(divide="ignore"):
        log_eta = np.log(block.eta)

    gamma = np.empty((nodes.size, B), dtype=np.float64)
    for row, node in enumerate(nodes):
        old = int(z[node])
        neighbours = neighbour_block_counts(A.A, Z, node)
        members = counts.copy()
        members[old] -= 1

        log_gamma = log_eta + np.einsum("qkt,pqkt->p", neighbours, contrast) + rest_totals @ members
        top = log_gamma.max()
        if not np.isfinite(top):
            raise NumericalError(
                "assignment probabilities are all zero",
                code="assignment_row_degenerate",
                details={'node': int(node)},
            )
        weights = np.exp(log_gamma - top)
        gamma[row] = weights / weights.sum()

        new = int(rng.choice(B, p=gamma[row]))
        if new != old:
            z[node] = new
            Z[node, old] = 0.0
            Z[node, new] = 1.0
            counts[old] -= 1
            counts[new] += 1
            stats.move_node(neighbours, old, new, counts)

    return BlockState(z, block.eta, block.alpha), AssignmentPosterior(nodes, gamma)


# ========== CHAIN DRIVER ==========

class GibbsSampler:
    """One Markov chain over (eta, omega, latents, z) for a fixed data tensor"""

    def __init__(self, data: AdjacencyTensor, cfg: GibbsConfig, threads: Optional[int] = None,
                 debug_checks: Optional[bool] = None):
        self.data = data
        self.cfg = cfg
        self.seed = cfg.seed if cfg.seed is not None else fresh_seed()
        self.rng = make_rng(self.seed)
        self.threads = resolve_thread_count(runtime_config.threads if threads is None else threads)
        self.debug_checks = runtime_config.debug_checks if debug_checks is None else debug_checks
        self.kernels = latent_kernels(cfg.kernels)
        self.grams = {
            'mu': rbf_gram(data.times, self.kernels.mu),
            'mu_p': rbf_gram(data.times, self.kernels.mu_p),
            'xbar': rbf_gram(data.times, self.kernels.xbar),
            'x': rbf_gram(data.times, self.kernels.x),
        }
        self.timer = StepTimer()
        self.iteration = 0
        self._executor: Optional[ThreadPoolExecutor] = (
            ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        )

        self.block = self._initial_block()
        self.latent = LatentState.from_prior(
            cfg.n_blocks, data.K, data.times, cfg.n_cross, cfg.n_within, self.rng,
            kernels=self.kernels, a1=cfg.a1, a2=cfg.a2,
        )
        self.stats = block_stats(data, self.block.z, cfg.n_blocks, cfg.pair_counting)
        self.psi = logits(self.latent)
        self.pi = probabilities(self.psi)
        self.aux = PGAux(np.zeros(self.stats.n.shape))
        self.last_assignment: Optional[AssignmentPosterior] = None

    def __enter__(self) -> "GibbsSampler":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def _initial_block(self) -> BlockState:
        cfg, N, B = self.cfg, self.data.N, self.cfg.n_blocks
        if cfg.init == "given":
            z = np.asarray(cfg.initial_z, dtype=np.int64) - 1
            validate_assignments(z, N, B, field_name="gibbs.initial_z").raise_if_invalid()
        elif cfg.fixed_assignments and B == N:
            z = np.arange(N, dtype=np.int64)
        else:
            z = self.rng.integers(0, B, size=N)
        return BlockState.from_assignments(z, B, alpha=cfg.alpha)

    def replace_data(self, data: AdjacencyTensor) -> None:
        """Swap the observed tensor (same dimensions and stamps) and recompute the statistics"""
        if data.A.shape != self.data.A.shape or not np.array_equal(data.times, self.data.times):
            raise ValidationError("replacement data must match the original dimensions and stamps",
                                  field="data", code="shape_mismatch")
        self.data = data
        self.stats = block_stats(data, self.block.z, self.cfg.n_blocks, self.cfg.pair_counting)

    # Step execution

    def _timed(self, name: str, func: Callable[..., Result], *args: Any, **kwargs: Any) -> Result:
        with self.timer.measure(name):
            try:
                return func(*args, **kwargs)
            except NumericalError as e:
                raise NumericalError(
                    f"{e.message} (iteration {self.iteration}, step {name})",
                    code=e.code,
                    details={**e.details, 'iteration': self.iteration, 'step': name},
                ) from e

    def _omega_streams(self) -> List[np.random.Generator]:
        return [substream(self.seed, self.iteration, t) for t in range(self.data.T)]

    def step(self) -> None:
        """One full sweep of the ten conditional updates"""
        cfg, grams, rng = self.cfg, self.grams, self.rng

        self.block = self._timed("eta", update_eta, self.block, rng)
        self.aux = self._timed(
            "omega", update_omega, self.psi, self.stats, rng,
            threshold=cfg.pg_threshold, streams=self._omega_streams(), executor=self._executor,
        )
        self._check("omega")

        mu = self._timed("mu", update_mu_global, self.latent, self.stats, self.aux, grams["mu"], rng)
        self.latent = self.latent.evolve(mu=mu)
        xbar = self._timed("xbar", update_xbar, self.latent, self.stats, self.aux, grams["xbar"], rng)
        self.latent = self.latent.evolve(xbar=xbar)
        x = self._timed("x", update_x_within, self.latent, self.stats, self.aux, grams["x"], rng)
        self.latent = self.latent.evolve(x=x)
        delta = self._timed("delta", update_shrinkage_cross, self.latent, grams["xbar"], rng)
        self.latent = self.latent.evolve(delta=delta)
        delta_k = self._timed("delta_k", update_shrinkage_within, self.latent, grams["x"], rng)
        self.latent = self.latent.evolve(delta_k=delta_k)
        mu_pk = self._timed("mu_pk", update_mu_within, self.latent, self.stats, self.aux, grams["mu_p"], rng)
        self.latent = self.latent.evolve(mu_pk=mu_pk)

        self.psi = self._timed("pi", logits, self.latent)
        self.pi = probabilities(self.psi)
        self._check("pi")

        if not cfg.fixed_assignments:
            fraction = scan_schedule(self.iteration, cfg.iterations, cfg.scan.f_min, cfg.scan.decay)
            scan_set = draw_scan_set(fraction, self.data.N, rng)
            self.block, self.last_assignment = self._timed(
                "z", update_assignments, self.data, self.block, self.stats, self.pi, scan_set, rng
            )
            self._check("z")

        self.iteration += 1

    def _check(self, step: str) -> None:
        if not self.debug_checks:
            return
        result = ValidationResult()
        if step == "omega":
            result.merge(self.aux.check(self.stats))
        elif step == "pi":
            if not (np.all(self.pi > 0) and np.all(self.pi < 1)):
                result.add_error("pi must lie in (0, 1)", "pi", "out_of_range")
            if not np.array_equal(self.pi, self.pi.transpose(1, 0, 2, 3)):
                result.add_error("pi must be symmetric", "pi", "not_symmetric")
        elif step == "z":
            result.merge(self.stats.check())
            fresh = block_stats(self.data, self.block.z, self.cfg.n_blocks, self.cfg.pair_counting)
            if not (np.array_equal(fresh.n, self.stats.n) and np.array_equal(fresh.y, self.stats.y)):
                result.add_error("incremental statistics drifted from recomputation", "stats", "stats_drift")
        if not result.is_valid:
            raise NumericalError(
                f"invariant violated after step {step}: {result.get_first_error()}",
                code="invariant_violation",
                details={'iteration': self.iteration, 'step': step},
            )

    def empty_trace(self) -> PosteriorTrace:
        return PosteriorTrace(
            times=np.array(self.data.times), n_nodes=self.data.N, n_layers=self.data.K,
            n_blocks=self.cfg.n_blocks, n_cross=self.cfg.n_cross, n_within=self.cfg.n_within,
            kernels=self.kernels, a1=self.cfg.a1, a2=self.cfg.a2, seed=self.seed,
            config={'gibbs': self.cfg.model_dump(mode="json")}, node_names=self.data.node_names,
        )

    def run(self) -> PosteriorTrace:
        """Run the configured number of iterations and collect the kept draws"""
        cfg = self.cfg
        trace = self.empty_trace()
        logger.info(
            f"Starting chain: N={self.data.N} K={self.data.K} T={self.data.T} "
            f"B={cfg.n_blocks} R={cfg.n_cross} H={cfg.n_within} seed={self.seed}"
        )

        iterations = tqdm(range(cfg.iterations), disable=not cfg.progress, desc=f"chain {self.seed}", leave=False)
        for iteration in iterations:
            self.step()
            if cfg.is_recorded(iteration):
                trace.append(
                    iteration, self.latent, self.block, log_likelihood(self.pi, self.stats),
                    pi=self.pi if cfg.store_pi else None,
                )
            if (iteration + 1) % cfg.log_every == 0:
                occupied = int(np.count_nonzero(self.block.counts))
                logger.debug(
                    f"iteration {iteration + 1}: loglik={log_likelihood(self.pi, self.stats):.3f} "
                    f"occupied_blocks={occupied}"
                )

        trace.timing = self.timer.summary()
        logger.info(
            f"Chain finished: {len(trace)} draws kept in {format_duration(self.timer.wall_clock)}"
        )
        return trace


def run_chain(data: AdjacencyTensor, cfg: GibbsConfig, threads: Optional[int] = None,
              debug_checks: Optional[bool] = None) -> PosteriorTrace:
    """Run one chain from initialisation to the final kept draw"""
    with GibbsSampler(data, cfg, threads=threads, debug_checks=debug_checks) as sampler:
        return sampler.run()


# ========== MULTIPLE CHAINS ==========

def _chain_job(data: AdjacencyTensor, cfg: GibbsConfig, out_dir: str, extra: Dict[str, Any]) -> Dict[str, Any]:
    from services.export_service import write_trace

    trace = run_chain(data, cfg)
    trace.config = {**trace.config, **extra.get('config', {})}
    write_trace(out_dir, trace, data_path=extra.get('data_path'))
    return {
        'out_dir': out_dir,
        'seed': trace.seed,
        'draws': len(trace),
        'seconds': trace.timing.get('wall_clock_seconds'),
    }


def run_chains(data: AdjacencyTensor, cfg: GibbsConfig, n_chains: int, out_dir: Union[str, Path],
               extra: Optional[Dict[str, Any]] = None, max_workers: Optional[int] = None) -> List[Dict[str, Any]]:
    """Run independent chains in separate processes, chain m seeded base + m, written to chain_<m>/"""
    if n_chains < 1:
        raise ValidationError("--chains must be at least 1", field="chains", code="too_small")
    base_seed = cfg.seed if cfg.seed is not None else fresh_seed()
    extra = extra or {}
    jobs = [
        (cfg.model_copy(update={'seed': base_seed + m, 'progress': False}), str(Path(out_dir) / f"chain_{m}"))
        for m in range(n_chains)
    ]

    logger.info(f"Running {n_chains} chains from base seed {base_seed}")
    workers = max_workers or min(n_chains, resolve_thread_count(n_chains))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_chain_job, data, chain_cfg, chain_dir, extra) for chain_cfg, chain_dir in jobs]
        return [future.result() for future in futures]
