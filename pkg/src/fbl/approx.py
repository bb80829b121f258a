"""Normal approximations and the AWGN reference curve."""

from __future__ import annotations

import math

import numpy as np

from . import channel as ch
from . import mc
from . import specfun as sf
from .errors import DomainError
from .outage import capacity_dispersion, water_fill_batch

__all__ = ["NormalApprox", "normal_approx_rate", "awgn_reference_rate"]


class NormalApprox:
    """Outage-averaged normal approximation over a fixed channel sample set.

    The same sample set (common random numbers) serves every blocklength in
    a sweep, which keeps curves smooth and monotone in n.
    """

    def __init__(self, spec, cov, cfg, stream_offset=0):
        if not isinstance(cov, (ch.WaterFill, ch.Isotropic, ch.Fixed)):
            raise DomainError(f"unknown covariance policy: {cov!r}")

        def cv_sampler(rng, size):
            h = ch.sample_channel(spec, rng, size)
            lam = ch.effective_eigenvalues(h, cov, spec)
            if isinstance(cov, ch.WaterFill):
                alloc, _ = water_fill_batch(lam, spec.snr)
            else:
                alloc = np.ones_like(lam)
            c, v = capacity_dispersion(lam, alloc)
            return np.stack([c, v], axis=-1)

        pairs = mc.sample_values(cv_sampler, cfg, stream_offset).reshape(-1, 2)
        self.c = pairs[:, 0]
        self.v = pairs[:, 1]

    def outage_cdf(self, rate, n):
        """Average of the per-realization normal error estimate at `rate`."""
        sigma = np.sqrt(self.v / n)
        positive = sigma > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(positive, (self.c - rate) / np.where(positive, sigma, 1.0), 0.0)
        terms = np.where(
            positive,
            sf.gaussian_q(z),
            np.where(self.c < rate, 1.0, np.where(self.c == rate, 0.5, 0.0)),
        )
        return float(np.mean(terms))

    def rate(self, n, epsilon):
        """Rate R with average normal error probability equal to epsilon."""
        if n < 1:
            raise DomainError("requires n >= 1")
        if not (0.0 < epsilon < 1.0):
            raise DomainError("epsilon must be in (0, 1)")
        r_max = float(np.max(self.c) + 10.0 * math.sqrt(max(np.max(self.v), 1e-12) / n))
        # small n can push the approximation below zero rate; keep the solve exact
        return mc.root_find_monotone(
            lambda r: self.outage_cdf(r, n), epsilon, (-r_max, r_max), tol=1e-12
        )


def normal_approx_rate(spec, cov, n, epsilon, cfg, stream_offset=0):
    """One-shot normal-approximation rate in nats."""
    return NormalApprox(spec, cov, cfg, stream_offset).rate(n, epsilon)


def awgn_reference_rate(rho, n, epsilon):
    """Normal-approximation reference for the nonfading channel, in nats."""
    if rho <= 0 or n < 1:
        raise DomainError("requires rho > 0 and n >= 1")
    v = rho * (rho + 2.0) / (1.0 + rho) ** 2
    return math.log1p(rho) - math.sqrt(v / n) * sf.gaussian_q_inv(epsilon) + math.log(n) / (2.0 * n)
