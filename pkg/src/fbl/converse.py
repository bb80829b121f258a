"""Meta-converse upper bounds on the maximal coding rate.

Two evaluations are provided: a semi-analytic single-transmit-antenna bound
(exact conditional tail laws given the fading gain, Monte Carlo only over the
gain) and a bound for isotropic codebooks (per-mode noncentral chi-square
sampling, with exponentially tilted importance sampling for the deep tail).
Also here: the log-domain asymptotic constants used by the property tests.

Every statistical shortcut is biased in the direction that enlarges
(weakens) the converse value, so reported numbers remain honest upper
bounds at the configured confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel as ch
from . import mc
from . import specfun as sf
from .bounds import BoundPoint
from .errors import DomainError

__all__ = [
    "ConditionalTailParams",
    "simo_conditional_tails",
    "SimoTailTable",
    "converse_simo",
    "converse_iso",
    "iso_statistic_sampler",
    "log_c_csirt",
    "log_c_csir",
]

# disjoint substream bases so selection and evaluation never share draws
_SEL_STREAM = 1 << 33
_EVAL_STREAM = 1 << 34


@dataclass(frozen=True)
class ConditionalTailParams:
    n: int
    g: float
    rho: float


def _thresholds(n, a, gamma):
    """Noncentral chi-square thresholds of the two conditional tails."""
    head = math.log1p(a) + 1.0 - gamma
    thr_s = 2.0 * n * (1.0 + a) * head / a
    thr_l = 2.0 * n * head / a
    return thr_s, thr_l


def simo_conditional_tails(p, gamma):
    """(P[S_n <= n*gamma | G], P[L_n >= n*gamma | G]) in closed form.

    S_n and L_n are the single-antenna hypothesis-testing statistics; given
    the fading gain they are affine in scaled noncentral chi-square variates,
    so both tails reduce to noncentral chi-square CDF evaluations.
    """
    n, g, rho = p.n, p.g, p.rho
    if g < 0:
        raise DomainError("fading gain must be >= 0")
    a = rho * g
    if a == 0.0:
        return (1.0 if 0.0 <= n * gamma else 0.0, 1.0 if 0.0 >= n * gamma else 0.0)
    thr_s, thr_l = _thresholds(n, a, gamma)
    k = 2 * n
    if thr_s <= 0.0:
        p_s = 1.0
    else:
        p_s = float(sf.noncentral_chi2_sf_batch(np.array([thr_s]), k, np.array([2.0 * n / a]))[0])
    if thr_l <= 0.0:
        p_l = 0.0
    else:
        p_l = math.exp(sf.noncentral_chi2_logcdf(thr_l, k, 2.0 * n * (1.0 + a) / a))
    return p_s, p_l


class SimoTailTable:
    """Conditional tails over a sample of fading gains, grid-interpolated.

    The maps a -> P[S <= n*gamma | a] and a -> log P[L >= n*gamma | a] are
    smooth in log a, so they are evaluated exactly on a 513-point log-spaced
    grid spanning the sample and interpolated onto the sample.
    """

    GRID = 513

    def __init__(self, n, a_samples):
        a = np.asarray(a_samples, dtype=float)
        if np.any(a < 0):
            raise DomainError("fading gains must be >= 0")
        self.n = int(n)
        self.a = a
        # gains with n*a below ~1e-6 are indistinguishable from zero: both
        # statistics are O(n*a) with spread O(sqrt(n*a)), so they collapse to
        # the exact a = 0 point mass well below any reported tolerance (and
        # their noncentralities ~n/a would be numerically intractable)
        pos = a > 1e-6 / self.n
        self._log_a = np.log(np.where(pos, a, 1.0))
        self._pos = pos
        if not np.any(pos):
            self.grid = np.array([1.0])
            self._log_grid = np.array([0.0])
            return
        lo = float(np.min(a[pos]))
        hi = float(np.max(a[pos]))
        if hi <= lo:
            grid = np.array([lo])
        else:
            grid = np.exp(np.linspace(math.log(lo), math.log(hi), self.GRID))
            grid[0], grid[-1] = lo, hi
        self.grid = grid
        self._log_grid = np.log(grid)

    def _grid_thresholds(self, gamma):
        n = self.n
        head = np.log1p(self.grid) + 1.0 - gamma
        thr_s = 2.0 * n * (1.0 + self.grid) * head / self.grid
        thr_l = 2.0 * n * head / self.grid
        return thr_s, thr_l

    def q_s(self, gamma):
        """P[S_n <= n*gamma | a_i] for every sample, via grid interpolation."""
        n = self.n
        thr_s, _ = self._grid_thresholds(gamma)
        vals = np.where(
            thr_s <= 0.0,
            1.0,
            sf.noncentral_chi2_sf_batch(np.maximum(thr_s, 0.0), 2 * n, 2.0 * n / self.grid),
        )
        out = np.interp(self._log_a, self._log_grid, vals)
        out[~self._pos] = 1.0 if gamma >= 0.0 else 0.0
        return out

    def log_q_l(self, gamma):
        """log P[L_n >= n*gamma | a_i] for every sample."""
        n = self.n
        _, thr_l = self._grid_thresholds(gamma)
        delta = 2.0 * n * (1.0 + self.grid) / self.grid
        # keep grid rows all the way down to the interpolation floor: the
        # default mean-oriented cutoff would blank rows that samples between
        # grid points still need
        vals = sf.noncentral_chi2_logcdf_batch(np.maximum(thr_l, 0.0), 2 * n, delta, rel_cutoff=500.0)
        vals = np.where(thr_l <= 0.0, -np.inf, vals)
        finite = np.isfinite(vals)
        if not np.any(finite):
            return np.full(self.a.shape, -np.inf)
        top = float(np.max(vals[finite]))
        floor = top - 500.0
        out = np.interp(self._log_a, self._log_grid, np.maximum(vals, floor))
        out = np.where(out <= floor + 1e-9, -np.inf, out)
        out[~self._pos] = 0.0 if gamma <= 0.0 else -np.inf
        return out


def _gain_sampler(spec):
    def draw(rng, size):
        h = ch.sample_channel(spec, rng, size)
        return np.sum(np.abs(h) ** 2, axis=(-2, -1))

    return draw


def _largest_below(f, target, lo, hi, iters=80):
    """Largest x in [lo, hi] with f(x) <= target, for nondecreasing f."""
    if f(lo) > target:
        raise DomainError("target not bracketed from below")
    if f(hi) <= target:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
            break
    return lo


def _smallest_at_least(f, target, lo, hi, iters=80):
    """Smallest x in [lo, hi] with f(x) >= target, for nondecreasing f."""
    if f(hi) < target:
        raise DomainError("target not bracketed from above")
    if f(lo) >= target:
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, abs(hi)):
            break
    return hi


def converse_simo(spec, n, epsilon, cfg, stream_offset=0):
    """Upper bound on the rate of the best (n-1)-blocklength code, t = 1.

    The threshold gamma is the smallest value whose exact-binomial lower
    confidence bound on P[S_n <= n*gamma] reaches epsilon (enlarging gamma
    only weakens the bound); the reported rate uses a lower confidence bound
    on P[L_n >= n*gamma] over an independent gain sample.
    """
    if spec.t != 1:
        raise DomainError("single-transmit-antenna bound requires t = 1")
    if n < 2:
        raise DomainError("requires n >= 2")
    if not (0.0 < epsilon < 1.0):
        raise DomainError("epsilon must be in (0, 1)")
    rho = spec.snr
    half = 0.5 * cfg.confidence_delta
    g_sel = mc.sample_values(_gain_sampler(spec), cfg, stream_offset + _SEL_STREAM)
    table_sel = SimoTailTable(n, rho * g_sel)

    trials = cfg.samples

    def f(gamma):
        return mc.cp_lower(float(np.sum(table_sel.q_s(gamma))), trials, half)

    hi = float(np.max(np.log1p(rho * g_sel))) + 1.0
    gamma = _smallest_at_least(f, epsilon, -hi - 10.0, hi)

    g_eval = mc.sample_values(_gain_sampler(spec), cfg, stream_offset + _EVAL_STREAM)
    table_eval = SimoTailTable(n, rho * g_eval)
    log_q = table_eval.log_q_l(gamma)
    log_mean, log_lo = mc.log_mean_bound(log_q, half, "lower")
    rate = -log_lo / (n - 1)
    nominal = -log_mean / (n - 1)
    return BoundPoint(
        n=n - 1, epsilon=epsilon, rate_nats=float(rate), side="upper", ci=(float(nominal), float(rate))
    )


def iso_statistic_sampler(spec, n, kind):
    """Batched sampler of S_n/n or L_n/n for isotropic codebooks.

    kind='S' draws the data statistic, kind='L' the auxiliary one; both use
    one scaled noncentral chi-square draw per eigenmode.
    """
    if kind not in ("S", "L"):
        raise DomainError("kind must be 'S' or 'L'")
    cov = ch.Isotropic()

    def draw(rng, size):
        h = ch.sample_channel(spec, rng, size)
        lam = ch.effective_eigenvalues(h, cov, spec)
        pos = lam > 0.0
        lam_safe = np.where(pos, lam, 1.0)
        if kind == "S":
            delta = 2.0 * n / lam_safe
            scale = 0.5 * lam_safe / (1.0 + lam_safe)
        else:
            delta = 2.0 * n * (1.0 + lam_safe) / lam_safe
            scale = 0.5 * lam_safe
        x = scale * sf.sample_noncentral_chi2(2 * n, np.where(pos, delta, 0.0), rng)
        contrib = np.where(pos, n * (np.log1p(lam) + 1.0) - x, 0.0)
        return np.sum(contrib, axis=-1) / n

    return draw


def _iso_log_tail_sampler(spec, n, gamma):
    """Tilted importance sampler of log contributions to P[L_n >= n*gamma].

    Conditional on the channel draw, the event is a left tail of a sum of
    scaled noncentral chi-squares; each row is exponentially tilted to put
    the sum's mean at the threshold, which keeps the estimator's relative
    variance bounded. Unbiased for any tilt, so the tilt root-find only
    affects variance.
    """
    cov = ch.Isotropic()
    k = 2 * n

    def draw(rng, size):
        h = ch.sample_channel(spec, rng, size)
        lam = ch.effective_eigenvalues(h, cov, spec)
        pos = lam > 0.0
        lam_safe = np.where(pos, lam, 1.0)
        s = np.where(pos, 0.5 * lam_safe, 0.0)
        delta = np.where(pos, 2.0 * n * (1.0 + lam_safe) / lam_safe, 0.0)
        c = n * np.sum(np.where(pos, np.log1p(lam) + 1.0, 0.0), axis=-1) - n * gamma
        ok = c > 0.0
        c_safe = np.where(ok, c, 1.0)

        def tilted_mean(theta):
            d = 1.0 + 2.0 * theta[..., None] * s
            return np.sum(s * (k + delta / d) / d, axis=-1)

        lo = np.zeros(size)
        hi = np.ones(size)
        for _ in range(200):
            too_big = tilted_mean(hi) > c_safe
            if not np.any(too_big):
                break
            hi = np.where(too_big, 2.0 * hi, hi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            above = tilted_mean(mid) > c_safe
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        theta = 0.5 * (lo + hi)

        d = 1.0 + 2.0 * theta[..., None] * s
        x = (s / d) * sf.sample_noncentral_chi2(k, delta / d, rng)
        x = np.where(pos, x, 0.0)
        total = np.sum(x, axis=-1)
        log_w = np.sum(
            np.where(pos, -delta * theta[..., None] * s / d - 0.5 * k * np.log(d), 0.0),
            axis=-1,
        ) + theta * total
        return np.where(ok & (total <= c_safe), log_w, -np.inf)

    return draw


def converse_iso(spec, n, epsilon, cfg, stream_offset=0):
    """Upper bound on the rate of isotropic codebooks at blocklength n."""
    if not (0.0 < epsilon < 1.0):
        raise DomainError("epsilon must be in (0, 1)")
    if n < 1:
        raise DomainError("requires n >= 1")
    gamma = mc.conservative_quantile(
        iso_statistic_sampler(spec, n, "S"), epsilon, "upper", cfg, stream_offset + _SEL_STREAM
    )
    log_q = mc.sample_values(_iso_log_tail_sampler(spec, n, gamma), cfg, stream_offset + _EVAL_STREAM)
    log_mean, log_lo = mc.log_mean_bound(log_q, 0.5 * cfg.confidence_delta, "lower")
    rate = -log_lo / n
    nominal = -log_mean / n
    return BoundPoint(
        n=n, epsilon=epsilon, rate_nats=float(rate), side="upper", ci=(float(nominal), float(rate))
    )


def _log_bracket(p, x):
    """log( x^p e^{-x} + Gamma(p, x) ), handling x = 0."""
    first = -np.inf if x == 0.0 else p * math.log(x) - x
    return float(np.logaddexp(first, sf.log_upper_inc_gamma(p, x)))


def log_c_csirt(spec, n, cfg, stream_offset=0):
    """log of the CSIRT converse constant at blocklength n (Monte Carlo mean)."""
    if n < 1:
        raise DomainError("requires n >= 1")
    m = spec.m
    bracket = _log_bracket(float(n), float(n - 1)) - sf.log_gamma(float(n))

    def det_sampler(rng, size):
        h = ch.sample_channel(spec, rng, size)
        gram = h @ np.conj(np.swapaxes(h, -1, -2))
        eye = np.eye(spec.t)
        return np.linalg.det(eye + spec.snr * gram).real

    vals = mc.sample_values(det_sampler, cfg, stream_offset)
    return float(m * bracket + math.log(np.mean(vals)))


def log_c_csir(spec, n, cfg, stream_offset=0):
    """log of the CSIR converse constant at blocklength n (Monte Carlo mean)."""
    r = spec.r
    if n < r:
        raise DomainError("requires n >= r")
    expo = ((r + 1) ** 2) // 4

    def moment_sampler(rng, size):
        h = ch.sample_channel(spec, rng, size)
        fro2 = np.sum(np.abs(h) ** 2, axis=(-2, -1))
        return (1.0 + spec.snr * fro2) ** expo

    vals = mc.sample_values(moment_sampler, cfg, stream_offset)
    total = (
        r * (r - 1) * math.log(math.pi)
        - sf.log_complex_multivariate_gamma(r, float(n))
        - sf.log_complex_multivariate_gamma(r, float(r))
        + math.log(np.mean(vals))
    )
    for i in range(1, r + 1):
        total += _log_bracket(float(n + r - 2 * i + 1), float(n + r - 2 * i))
    return float(total)
