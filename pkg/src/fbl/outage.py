"""Water-filling, instantaneous capacity/dispersion, outage probability,
and epsilon-capacity under the three input-covariance policies.

Rates are in nats throughout; conversion to bits happens at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel as ch
from . import mc
from .errors import ConfigurationError, DomainError

__all__ = [
    "PowerAllocation",
    "water_fill",
    "water_fill_batch",
    "capacity_dispersion",
    "capacity_sampler",
    "outage_probability",
    "epsilon_capacity",
    "QuantileEstimate",
]


@dataclass(frozen=True)
class PowerAllocation:
    """Per-eigenmode powers v and the water level gamma_bar."""

    v: np.ndarray
    gamma_bar: float
    outage_certain: bool = False


def water_fill_batch(lam, rho):
    """Vectorized water-filling over a stack of descending eigenvalue rows.

    Returns (v, gamma_bar) with v of the same shape as lam. Rows whose
    eigenvalues are all zero get v = 0 and gamma_bar = inf.
    """
    lam = np.asarray(lam, dtype=float)
    m = lam.shape[-1]
    with np.errstate(divide="ignore"):
        inv = np.where(lam > 0.0, 1.0 / np.where(lam > 0.0, lam, 1.0), np.inf)
    csum = np.cumsum(np.where(np.isfinite(inv), inv, 0.0), axis=-1)
    k = np.arange(1, m + 1, dtype=float)
    cand = (rho + csum) / k
    # a prefix of size k is feasible when the water level clears mode k
    feasible = (cand > inv) & (lam > 0.0)
    k_act = np.sum(feasible, axis=-1)  # largest feasible prefix
    any_active = k_act > 0
    idx = np.maximum(k_act - 1, 0)
    gamma_bar = np.take_along_axis(cand, idx[..., None], axis=-1)[..., 0]
    gamma_bar = np.where(any_active, gamma_bar, np.inf)
    # inf - inf would occur on all-zero rows; mask inv before subtracting
    diff = np.where(np.isfinite(inv), gamma_bar[..., None], 0.0) - np.where(
        np.isfinite(inv), inv, 0.0
    )
    v = np.clip(diff, 0.0, None)
    v = np.where(any_active[..., None], v, 0.0)
    return v, gamma_bar


def water_fill(eigs, rho):
    """Water-filling power allocation for one descending eigenvalue vector."""
    lam = np.asarray(eigs, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DomainError("expected a 1-D eigenvalue vector")
    if np.any(np.diff(lam) > 0) or np.any(lam < 0):
        raise DomainError("eigenvalues must be nonnegative and descending")
    if rho <= 0:
        raise DomainError("rho must be positive")
    v, gamma_bar = water_fill_batch(lam[None, :], rho)
    certain = not np.any(lam > 0)
    return PowerAllocation(v=v[0], gamma_bar=float(gamma_bar[0]), outage_certain=certain)


def capacity_dispersion(eigs, alloc):
    """Instantaneous capacity C (nats) and dispersion V (nats^2).

    Accepts stacks: eigs and alloc of shape (..., m); returns (C, V) arrays
    (or floats for 1-D input). Inactive modes (v*lambda = 0) contribute zero
    to both.
    """
    lam = np.asarray(eigs, dtype=float)
    v = np.asarray(alloc, dtype=float)
    if lam.shape != v.shape:
        raise DomainError("eigenvalue/allocation length mismatch")
    g = v * lam
    c = np.sum(np.log1p(g), axis=-1)
    active = g > 0.0
    var = np.sum(active, axis=-1) - np.sum(np.where(active, (1.0 + g) ** -2.0, 0.0), axis=-1)
    if lam.ndim == 1:
        return float(c), float(max(var, 0.0))
    return c, np.clip(var, 0.0, None)


def capacity_sampler(spec, cov):
    """Batched sampler of the instantaneous capacity C(H) in nats."""

    def draw(rng, size):
        h = ch.sample_channel(spec, rng, size)
        lam = ch.effective_eigenvalues(h, cov, spec)
        if isinstance(cov, ch.WaterFill):
            v, _ = water_fill_batch(lam, spec.snr)
            return np.sum(np.log1p(v * lam), axis=-1)
        return np.sum(np.log1p(lam), axis=-1)

    return draw


def outage_probability(spec, cov, rate, cfg, stream_offset=0):
    """Monte Carlo estimate of P[C(H) < rate] with a Clopper-Pearson envelope."""
    if rate < 0:
        raise DomainError("rate must be >= 0")
    sampler = capacity_sampler(spec, cov)

    def event(rng, size):
        return sampler(rng, size) < rate

    return mc.estimate_probability(event, cfg, stream_offset)


@dataclass(frozen=True)
class QuantileEstimate:
    value: float
    ci_lo: float
    ci_hi: float


def epsilon_capacity(spec, cov, epsilon, cfg, stream_offset=0):
    """Empirical epsilon-quantile of C(H) with an order-statistic CI (nats)."""
    if not (0.0 < epsilon < 1.0):
        raise DomainError("epsilon must be in (0, 1)")
    if epsilon * cfg.samples < 50:
        raise ConfigurationError("epsilon * samples < 50: quantile too unstable")
    values = np.sort(mc.sample_values(capacity_sampler(spec, cov), cfg, stream_offset))
    n = cfg.samples
    k = max(1, math.ceil(epsilon * n))
    half = 0.5 * cfg.confidence_delta
    k_lo = mc.quantile_order_indices(n, epsilon, "lower", half)
    k_hi = mc.quantile_order_indices(n, epsilon, "upper", half)
    return QuantileEstimate(
        value=float(values[k - 1]),
        ci_lo=float(values[k_lo - 1]),
        ci_hi=float(values[k_hi - 1]),
    )
