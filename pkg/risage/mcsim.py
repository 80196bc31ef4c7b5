"""
Monte Carlo oracle for the two hops.

Channels follow the aging model h[t] = rho h[tau] + rho_bar z with the
estimate h_hat = h[tau] drawn Rician. Draws are generated in chunks; every
chunk of a batch gets its own SeedSequence sub-stream, so a batch depends
only on (seed, stream, n) and not on the worker count.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from risage import tracking
from risage.errors import InvalidArgumentError, SingularInputError
from risage.scenario import ResolvedScenario

logger = logging.getLogger(__name__)

# complex entries generated per chunk
MAX_CHUNK_ENTRIES = 2**21

STREAM_G2A = 1
STREAM_A2G = 2
STREAM_CHI = 3

BATCH_SCHEMA = "batch/v1"


class RngStream(BaseModel):
    model_config = ConfigDict(frozen=True)

    master_seed: int = Field(ge=0, lt=2**64)
    stream_id: int = Field(ge=0)

    def generator(self, *sub: int) -> np.random.Generator:
        return make_rng(self.master_seed, self.stream_id, *sub)


def make_rng(master_seed: int, stream_id: int, *sub: int) -> np.random.Generator:
    """Generator for the (master_seed, stream_id, *sub) sub-stream"""
    if master_seed < 0 or stream_id < 0 or any(s < 0 for s in sub):
        raise InvalidArgumentError("seeds and stream keys must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(stream_id, *sub)))


class SampleBatch(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    hop: str = Field(pattern="^(g2a|a2g)$")
    los_state: np.ndarray
    seed: Optional[int] = None
    stream_id: Optional[int] = None
    plan: Tuple[Tuple[int, int, Tuple[int, ...]], ...] = ()

    @model_validator(mode="after")
    def _check(self):
        if self.values.shape != self.los_state.shape:
            raise ValueError("values and los_state must have the same length")
        if np.any(self.values < 0):
            raise ValueError("SNR draws must be nonnegative")
        return self

    def __len__(self) -> int:
        return int(self.values.size)


# ---------------------------------------------------------------- channels

def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries"""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def sample_rician_vector(
    kappa, dim: int, rng: np.random.Generator, n: int = 1, los_steering: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    n Rician vectors of length dim with unit per-entry power:
    sqrt(kappa/(kappa+1)) steering + CN(0, 1/(kappa+1)).

    kappa may be a scalar or one value per row.
    """
    if dim < 1 or n < 1:
        raise InvalidArgumentError("dim and n must be >= 1")
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0):
        raise InvalidArgumentError("kappa must be nonnegative")
    steering = np.ones(dim, dtype=complex) if los_steering is None else np.asarray(los_steering, dtype=complex)
    if steering.shape != (dim,) or not np.allclose(np.abs(steering), 1.0):
        raise InvalidArgumentError("steering must be a unit-modulus vector of length dim")
    k = kappa.reshape(-1, 1) if kappa.ndim else kappa
    scatter = _cn(rng, (n, dim))
    return np.sqrt(k / (k + 1.0)) * steering[None, :] + scatter / np.sqrt(k + 1.0)


def age_vector(h_ref: np.ndarray, rho: float, rng: np.random.Generator) -> np.ndarray:
    """rho h_ref + sqrt(1 - rho^2) z with fresh CN(0, 1) innovation z"""
    if abs(rho) > 1:
        raise InvalidArgumentError("|rho| must not exceed 1")
    rho_bar = math.sqrt(1.0 - rho * rho)
    return rho * h_ref + rho_bar * _cn(rng, np.shape(h_ref))


def _draw_los(p_los: float, rng: np.random.Generator, n: int, pinned: Optional[bool]) -> np.ndarray:
    if pinned is not None:
        return np.full(n, bool(pinned))
    return rng.random(n) < p_los


def _chunks(n: int, dim: int):
    size = max(1, MAX_CHUNK_ENTRIES // max(dim, 1))
    for start in range(0, n, size):
        yield min(size, n - start)


def sample_g2a_snr(
    cfg: ResolvedScenario, rng: np.random.Generator, n: int, los_state: Optional[bool] = None
) -> SampleBatch:
    """
    MRT toward the aged estimate: SNR = gamma |h^H h_hat|^2 / ||h_hat||^2.

    The LOS state is redrawn per sample unless los_state pins it.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    M = cfg.antennas
    rho = cfg.su.correlation
    values, states = [], []
    for count in _chunks(n, M):
        los = _draw_los(cfg.su.p_los, rng, count, los_state)
        kappa = np.where(los, cfg.su.k_factor_linear, 0.0)
        gamma = np.where(los, cfg.g2a_mean_snr_los, cfg.g2a_mean_snr_nlos)
        h_hat = sample_rician_vector(kappa, M, rng, count)
        h = age_vector(h_hat, rho, rng)
        inner = np.sum(np.conj(h) * h_hat, axis=1)
        norm_sq = np.sum(np.abs(h_hat) ** 2, axis=1)
        values.append(gamma * np.abs(inner) ** 2 / norm_sq)
        states.append(los)
    return SampleBatch(values=np.concatenate(values), hop="g2a", los_state=np.concatenate(states))


def quantize_phases(phases: np.ndarray, bits: int) -> np.ndarray:
    """Nearest point of {0, 2pi/Q, ..., 2pi(Q-1)/Q}, Q = 2^bits"""
    if bits < 1:
        raise InvalidArgumentError("phase_bits must be >= 1")
    step = 2.0 * math.pi / (2**bits)
    return np.mod(np.round(np.mod(phases, 2.0 * math.pi) / step) * step, 2.0 * math.pi)


def _a2g_draw(cfg: ResolvedScenario, rng: np.random.Generator, count: int, los_state: Optional[bool]):
    los = _draw_los(cfg.ur.p_los, rng, count, los_state)
    kappa_ur = np.where(los, cfg.ur.k_factor_linear, 0.0)
    gamma = np.where(los, cfg.a2g_mean_snr_los, cfg.a2g_mean_snr_nlos)
    N = cfg.elements
    h_ur_hat = sample_rician_vector(kappa_ur, N, rng, count)
    h_rd = sample_rician_vector(cfg.k_factor_rd, N, rng, count)
    return los, gamma, h_ur_hat, h_rd


def sample_a2g_snr(
    cfg: ResolvedScenario,
    rng: np.random.Generator,
    n: int,
    phase_bits: Optional[int] = None,
    los_state: Optional[bool] = None,
) -> SampleBatch:
    """
    RIS phases co-phase the R-D channel with the aged UAV-RIS estimate,
    theta_n = -arg h_RD,n - arg h_hat_UR,n (optionally quantized);
    SNR = gamma |sum_n h_RD,n e^{j theta_n} h_UR,n|^2.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    if phase_bits is not None and phase_bits < 1:
        raise InvalidArgumentError("phase_bits must be >= 1")
    rho = cfg.ur.correlation
    values, states = [], []
    for count in _chunks(n, 2 * cfg.elements):
        los, gamma, h_ur_hat, h_rd = _a2g_draw(cfg, rng, count, los_state)
        h_ur = age_vector(h_ur_hat, rho, rng)
        phases = -np.angle(h_rd) - np.angle(h_ur_hat)
        if phase_bits is not None:
            phases = quantize_phases(phases, phase_bits)
        combined = np.sum(h_rd * np.exp(1j * phases) * h_ur, axis=1)
        values.append(gamma * np.abs(combined) ** 2)
        states.append(los)
    return SampleBatch(values=np.concatenate(values), hop="a2g", los_state=np.concatenate(states))


def sample_a2g_snr_quadratic(
    cfg: ResolvedScenario, rng: np.random.Generator, n: int, los_state: Optional[bool] = None
) -> SampleBatch:
    """Same law through the envelope form gamma |rho g.g_hat + rho_bar ||g|| w|^2"""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rho = cfg.ur.correlation
    rho_bar = math.sqrt(max(0.0, 1.0 - rho * rho))
    values, states = [], []
    for count in _chunks(n, 2 * cfg.elements):
        los, gamma, h_ur_hat, h_rd = _a2g_draw(cfg, rng, count, los_state)
        g, g_hat = np.abs(h_rd), np.abs(h_ur_hat)
        w = _cn(rng, count)
        gain = rho * np.sum(g * g_hat, axis=1) + rho_bar * np.linalg.norm(g, axis=1) * w
        values.append(gamma * np.abs(gain) ** 2)
        states.append(los)
    return SampleBatch(values=np.concatenate(values), hop="a2g", los_state=np.concatenate(states))


def estimate_chi_moments(
    cfg: ResolvedScenario, n: int, rng: np.random.Generator, los: bool = True
) -> Tuple[float, float]:
    """
    Sample mean and variance of chi = (rho/rho_bar) g.g_hat/||g|| + w for one
    UAV-RIS LOS state; w ~ CN(0, 1) contributes exactly 1 to the variance.
    """
    rho = cfg.ur.correlation
    rho_bar_sq = 1.0 - rho * rho
    if rho_bar_sq <= 0.0:
        raise SingularInputError("chi moments are singular for |rho| = 1")
    if n < 2:
        raise InvalidArgumentError("need at least two draws")
    ratio = rho / math.sqrt(rho_bar_sq)
    sums = np.zeros(2)
    for count in _chunks(n, 2 * cfg.elements):
        _, _, h_ur_hat, h_rd = _a2g_draw(cfg, rng, count, los)
        g, g_hat = np.abs(h_rd), np.abs(h_ur_hat)
        u = np.sum(g * g_hat, axis=1) / np.linalg.norm(g, axis=1)
        sums += (u.sum(), (u * u).sum())
    mean_u = sums[0] / n
    var_u = max(0.0, sums[1] / n - mean_u**2) * n / (n - 1)
    return ratio * mean_u, 1.0 + ratio**2 * var_u


# ---------------------------------------------------------------- partitioned batches

class PartitionSlice(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: int
    count: int
    stream_key: Tuple[int, ...]


def partition_plan(n: int, stream_id: int, chunk: int) -> Tuple[PartitionSlice, ...]:
    """Fixed-size slices of n draws, each with its own sub-stream key"""
    if n < 1 or chunk < 1:
        raise InvalidArgumentError("n and chunk must be >= 1")
    return tuple(
        PartitionSlice(start=start, count=min(chunk, n - start), stream_key=(stream_id, index))
        for index, start in enumerate(range(0, n, chunk))
    )


def run_partitioned(
    sampler: Callable[[np.random.Generator, int], SampleBatch],
    master_seed: int,
    plan: Tuple[PartitionSlice, ...],
    workers: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Run sampler over every slice (threads when workers > 1); results keep plan order"""

    def run(part: PartitionSlice) -> SampleBatch:
        return sampler(make_rng(master_seed, *part.stream_key), part.count)

    if workers > 1 and len(plan) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, plan))
    else:
        parts = [run(part) for part in plan]
    return np.concatenate([p.values for p in parts]), np.concatenate([p.los_state for p in parts])


def draw_batch(
    hop: str,
    cfg: ResolvedScenario,
    master_seed: int,
    n: int,
    workers: int = 1,
    stream_id: Optional[int] = None,
    chunk: int = 2**16,
    phase_bits: Optional[int] = None,
    los_state: Optional[bool] = None,
    quadratic: bool = False,
) -> SampleBatch:
    """Seeded batch of one hop with provenance"""
    if hop == "g2a":
        stream = STREAM_G2A if stream_id is None else stream_id

        def sampler(rng, count):
            return sample_g2a_snr(cfg, rng, count, los_state=los_state)

    elif hop == "a2g":
        stream = STREAM_A2G if stream_id is None else stream_id

        def sampler(rng, count):
            if quadratic:
                return sample_a2g_snr_quadratic(cfg, rng, count, los_state=los_state)
            return sample_a2g_snr(cfg, rng, count, phase_bits=phase_bits, los_state=los_state)

    else:
        raise InvalidArgumentError(f"unknown hop '{hop}'")

    plan = partition_plan(n, stream, chunk)
    values, los = run_partitioned(sampler, master_seed, plan, workers)
    logger.debug(f"Drew {n} {hop} samples in {len(plan)} slices (seed {master_seed}, stream {stream})")
    return SampleBatch(
        values=values,
        hop=hop,
        los_state=los,
        seed=master_seed,
        stream_id=stream,
        plan=tuple((p.start, p.count, p.stream_key) for p in plan),
    )


def sample_e2e(
    cfg: ResolvedScenario, seed: int, n: int, workers: int = 1, phase_bits: Optional[int] = None
) -> Tuple[SampleBatch, SampleBatch]:
    """Paired G2A and A2G batches from independent sub-streams"""
    g2a = draw_batch("g2a", cfg, seed, n, workers=workers)
    a2g = draw_batch("a2g", cfg, seed, n, workers=workers, phase_bits=phase_bits)
    return g2a, a2g


# ---------------------------------------------------------------- statistics

BatchLike = Union[SampleBatch, np.ndarray]


def _values(batch: BatchLike) -> np.ndarray:
    values = batch.values if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=float)
    if values.size == 0:
        raise InvalidArgumentError("batch is empty")
    return values


def empirical_cdf(batch: BatchLike) -> Callable:
    """Right-continuous step function F_n(x) = #{v <= x} / n"""
    ordered = np.sort(_values(batch))
    n = ordered.size

    def cdf(x):
        return np.searchsorted(ordered, np.asarray(x, dtype=float), side="right") / n

    return cdf


def ks_statistic(batch: BatchLike, cdf: Callable) -> float:
    """One-sample Kolmogorov-Smirnov distance against an analytical CDF"""
    return float(stats.kstest(_values(batch), cdf).statistic)


def ks_two_sample(batch_a: BatchLike, batch_b: BatchLike) -> float:
    return float(stats.ks_2samp(_values(batch_a), _values(batch_b)).statistic)


class OutageEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    probability: float
    ci_low: float
    ci_high: float
    outages: int
    draws: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def _wilson(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_outage(g2a: BatchLike, a2g: BatchLike, gamma_th: float) -> OutageEstimate:
    """Fraction of paired draws with min(SNR_G2A, SNR_A2G) < gamma_th, Wilson 95% interval"""
    first, second = _values(g2a), _values(a2g)
    if first.size != second.size:
        raise InvalidArgumentError("outage estimation needs paired batches of equal length")
    outages = int(np.count_nonzero(np.minimum(first, second) < gamma_th))
    low, high = _wilson(outages, first.size)
    return OutageEstimate(
        probability=outages / first.size, ci_low=low, ci_high=high, outages=outages, draws=first.size
    )


class HistogramDensity(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    edges: np.ndarray
    density: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def histogram_density(batch: BatchLike, edges: Optional[np.ndarray] = None) -> HistogramDensity:
    """
    Density histogram with Freedman-Diaconis bins by default and per-bin
    Wilson bands scaled to density units.
    """
    values = _values(batch)
    if edges is None:
        edges = np.histogram_bin_edges(values, bins="fd")
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(values, bins=edges)
    widths = np.diff(edges)
    n = values.size
    low = np.empty(counts.size)
    high = np.empty(counts.size)
    for i, c in enumerate(counts):
        low[i], high[i] = _wilson(c, n)
    return HistogramDensity(
        edges=edges,
        density=counts / (n * widths),
        ci_low=low / widths,
        ci_high=high / widths,
    )


# ---------------------------------------------------------------- export

def export_batch(batch: SampleBatch, path: Union[str, Path], config_hash: str) -> List[Path]:
    """CSV of the draws plus a JSON sidecar with seed, stream and partition plan"""
    path = Path(path)
    frame = pd.DataFrame(
        {
            "sample_index": np.arange(len(batch)),
            "hop": batch.hop,
            "los_state": np.where(batch.los_state, "los", "nlos"),
            "snr_linear": batch.values,
        }
    )
    csv_path = tracking.write_csv(frame, path, BATCH_SCHEMA, config_hash, batch.seed)
    sidecar = path.with_suffix(".json")
    meta = {
        "schema": BATCH_SCHEMA,
        "config_hash": config_hash,
        "seed": batch.seed,
        "stream_id": batch.stream_id,
        "hop": batch.hop,
        "samples": len(batch),
        "partition_plan": [list(p[:2]) + [list(p[2])] for p in batch.plan],
    }
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    logger.info(f"✅ Exported {len(batch)} {batch.hop} draws to {csv_path}")
    return [csv_path, sidecar]
