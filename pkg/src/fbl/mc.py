"""Deterministic, parallelizable Monte Carlo engine.

Work is split into fixed-size chunks; chunk i always draws from the
counter-based substream (seed, stream_offset + i), so results are
bit-identical for any worker-thread count. Reductions are order-independent
(results are stored by chunk index before combining).

Confidence handling is one-sided-aware: probability estimates carry exact
Clopper-Pearson envelopes, and quantiles are returned as order statistics
chosen so the requested coverage holds with the configured confidence.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError

__all__ = [
    "MCConfig",
    "TailEstimate",
    "RngStream",
    "worker_count",
    "estimate_probability",
    "sample_values",
    "conservative_quantile",
    "quantile_order_indices",
    "root_find_monotone",
    "cp_lower",
    "cp_upper",
    "log_mean_bound",
]


@dataclass(frozen=True)
class MCConfig:
    """Monte Carlo run parameters.

    confidence_delta is the per-estimate error budget: every interval or
    one-sided bound produced under this config holds with probability at
    least 1 - confidence_delta.
    """

    seed: int
    samples: int = 100_000
    confidence_delta: float = 0.01
    chunk_size: int = 4096

    def __post_init__(self):
        if self.samples < 100:
            raise ConfigurationError("samples must be >= 100")
        if not (0.0 < self.confidence_delta <= 0.05):
            raise ConfigurationError("confidence_delta must be in (0, 0.05]")
        if self.chunk_size < 1:
            raise ConfigurationError("chunk_size must be positive")


@dataclass(frozen=True)
class TailEstimate:
    """Binomial probability estimate with an exact confidence envelope."""

    successes: int
    trials: int
    p_hat: float
    cp_lower: float
    cp_upper: float

    def __post_init__(self):
        if not (self.cp_lower <= self.p_hat <= self.cp_upper):
            raise ValueError("inconsistent confidence envelope")


class RngStream:
    """Counter-based substream: draws depend only on (seed, stream_index)."""

    def __init__(self, seed, stream_index):
        self.seed = int(seed)
        self.stream_index = int(stream_index)

    def generator(self):
        key = np.array(
            [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_index & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        return np.random.Generator(np.random.Philox(key=key))


def substream_index(*indices):
    """Mix a tuple of small nonnegative indices into one 64-bit stream index."""
    h = 0
    for i in indices:
        h = (h * 0x100000001B3 + int(i) + 1) & 0xFFFFFFFFFFFFFFFF
    return h


def worker_count():
    env = os.environ.get("FBL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chunk_plan(cfg):
    n_chunks = (cfg.samples + cfg.chunk_size - 1) // cfg.chunk_size
    sizes = [cfg.chunk_size] * n_chunks
    sizes[-1] = cfg.samples - cfg.chunk_size * (n_chunks - 1)
    return sizes


def _run_chunks(sampler, cfg, stream_offset):
    """Evaluate `sampler(rng, size)` over all chunks, in chunk-index order."""
    sizes = _chunk_plan(cfg)
    results = [None] * len(sizes)

    def work(i):
        rng = RngStream(cfg.seed, stream_offset + i).generator()
        results[i] = np.asarray(sampler(rng, sizes[i]))

    threads = worker_count()
    if threads == 1 or len(sizes) == 1:
        for i in range(len(sizes)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(sizes))))
    return results


def cp_lower(successes, trials, delta):
    """Exact one-sided lower confidence bound on a binomial proportion.

    `successes` may be fractional: for means of [0,1]-valued variables the
    Bernoulli law is extremal in convex order, so the binomial bound with the
    fractional success count remains conservative.
    """
    if successes <= 0:
        return 0.0
    return float(stats.beta.ppf(delta, successes, trials - successes + 1))


def cp_upper(successes, trials, delta):
    """Exact one-sided upper confidence bound on a binomial proportion."""
    if successes >= trials:
        return 1.0
    return float(stats.beta.isf(delta, successes + 1, trials - successes))


def estimate_probability(event_sampler, cfg, stream_offset=0):
    """Estimate P[event] with a two-sided Clopper-Pearson envelope.

    event_sampler(rng, size) must return a boolean/0-1 array of length size
    deterministically from the rng alone.
    """
    chunks = _run_chunks(event_sampler, cfg, stream_offset)
    successes = int(sum(int(np.count_nonzero(c)) for c in chunks))
    trials = cfg.samples
    half = 0.5 * cfg.confidence_delta
    return TailEstimate(
        successes=successes,
        trials=trials,
        p_hat=successes / trials,
        cp_lower=cp_lower(successes, trials, half),
        cp_upper=cp_upper(successes, trials, half),
    )


def sample_values(value_sampler, cfg, stream_offset=0):
    """Draw cfg.samples values deterministically; returns one flat array."""
    chunks = _run_chunks(value_sampler, cfg, stream_offset)
    return np.concatenate(chunks)


def quantile_order_indices(n, target_prob, direction, delta):
    """1-based order-statistic index k for a conservative empirical quantile.

    direction='upper': smallest k with P[Binomial(n, target) >= k] <= delta,
    so P[X <= x_(k)] >= target holds with confidence 1 - delta.
    direction='lower': largest k with P[Binomial(n, target) <= k-1] <= delta,
    so P[X <= x_(k)] <= target holds with confidence 1 - delta.
    """
    if direction == "upper":
        k = int(stats.binom.isf(delta, n, target_prob)) + 1
        while k <= n and stats.binom.sf(k - 1, n, target_prob) > delta:
            k += 1
        if k > n:
            raise ConfigurationError("too few samples for the requested quantile confidence")
        return k
    if direction == "lower":
        k = int(stats.binom.ppf(delta, n, target_prob))
        while k >= 1 and stats.binom.cdf(k - 1, n, target_prob) > delta:
            k -= 1
        if k < 1:
            raise ConfigurationError("too few samples for the requested quantile confidence")
        return k
    raise DomainError("direction must be 'upper' or 'lower'")


def conservative_quantile(value_sampler, target_prob, direction, cfg, stream_offset=0):
    """Order-statistic quantile with one-sided coverage at the configured confidence."""
    if not (0.0 < target_prob < 1.0):
        raise DomainError("target_prob must be in (0, 1)")
    values = np.sort(sample_values(value_sampler, cfg, stream_offset))
    k = quantile_order_indices(cfg.samples, target_prob, direction, cfg.confidence_delta)
    return float(values[k - 1])


def root_find_monotone(f, target, bracket, tol=1e-9, max_iter=200):
    """Bisection on a nondecreasing function; common-random-number friendly."""
    lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = f(lo), f(hi)
    if not (flo <= target <= fhi):
        raise DomainError("target not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm - target) <= tol or (hi - lo) <= 1e-10:
            return mid
        if fm < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def log_mean_bound(log_values, delta, side, n_batches=64):
    """Conservative log of the mean of positive values given in log domain.

    Returns (log_mean, log_bound): the log-domain sample mean and a
    confidence bound on it, shifted to `side` ('lower' or 'upper'). Used
    where the mean spans hundreds of orders of magnitude and an exact
    binomial envelope is unavailable. The lower side combines a batch-means
    normal bound with a distribution-free Markov fallback (a nonnegative
    unbiased estimate exceeds its mean by 1/d with probability at most d),
    so it stays finite even when a few samples carry most of the mass.
    """
    log_values = np.asarray(log_values, dtype=float)
    n = log_values.size
    shift = float(np.max(log_values))
    if not np.isfinite(shift):
        return -np.inf, -np.inf
    w = np.exp(log_values - shift)
    mean = float(np.mean(w))
    log_mean = shift + math.log(mean)
    b = min(n_batches, n)
    batch = np.array_split(w, b)
    bm = np.array([np.mean(x) for x in batch])
    se = float(np.std(bm, ddof=1) / math.sqrt(b)) if b > 1 else 0.0
    if side == "lower":
        z = float(stats.norm.isf(0.5 * delta))
        normal_lo = mean - z * se
        markov_lo = 0.5 * delta * mean
        lo = max(normal_lo, markov_lo)
        return log_mean, shift + math.log(lo)
    if side == "upper":
        z = float(stats.norm.isf(delta))
        return log_mean, shift + math.log(mean + z * se)
    raise DomainError("side must be 'lower' or 'upper'")
