"""Hypothesis-testing (kappa-beta) lower bounds on the maximal coding rate.

The main path draws the squared-sine decoding statistic, takes a conservative
upper quantile as the decision threshold gamma_n, and bounds the auxiliary
tail P[prod Beta_j <= gamma_n] in closed form (exact regularized-beta tail
when the effective transmit rank is 1, Chernoff otherwise). A separate
receiver-side-information bound for t = 1 reuses the converse module's exact
conditional tail laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy import special as scisp

from . import channel as ch
from . import converse as cv
from . import mc
from .bounds import BoundPoint
from .errors import ConfigurationError, DomainError
from .outage import water_fill_batch

__all__ = [
    "BoundPoint",
    "beta_product_log_tail",
    "markov_log_tail",
    "sin2_statistic_sampler",
    "sample_sin2_statistic",
    "gamma_n_ach",
    "rate_lower_bound",
    "csir_kappa_beta_simo",
    "tau_grid",
]

_STAT_STREAM = 1 << 35


def _effective_rank(spec, cov):
    """Transmit rank t* of the signaling scheme."""
    if isinstance(cov, ch.WaterFill):
        return spec.t
    if isinstance(cov, ch.Isotropic):
        return spec.t
    if isinstance(cov, ch.Fixed):
        ev = np.linalg.eigvalsh(np.asarray(cov.q))
        return int(np.sum(ev > 1e-12 * max(float(ev.max()), 1.0)))
    raise DomainError(f"unknown covariance policy: {cov!r}")


def markov_log_tail(n, t_eff, r, log_gamma_n):
    """Closed-form Markov bound on ln P[prod Beta_j <= gamma_n]."""
    return min(0.0, r * t_eff * math.log(n) + (n - t_eff - r) * log_gamma_n)


def _log_beta_tail_int_b(log_x, a, b):
    """ln I_x(a, b) for integer b, exact via the binomial-tail expansion."""
    if log_x >= 0.0:
        return 0.0
    one_minus = -math.expm1(log_x)
    log_1mx = math.log(one_minus) if one_minus > 0 else -np.inf
    nn = a + b - 1
    k = np.arange(b)
    terms = (
        scisp.gammaln(nn + 1.0)
        - scisp.gammaln(a + k + 1.0)
        - scisp.gammaln(b - k)
        + (a + k) * log_x
        + (b - 1 - k) * log_1mx
    )
    return float(scisp.logsumexp(terms))


def beta_product_log_tail(n, t_eff, r, log_gamma_n):
    """Upper bound on ln P[prod_{j=1}^r Beta(n - t_eff - j + 1, t_eff) <= gamma_n].

    Exact when t_eff = 1 (the product is Beta(n - r, r) in distribution);
    otherwise a Chernoff bound minimized over the tilt, never worse than the
    Markov closed form.
    """
    if not (n > t_eff + r) or t_eff < 1 or r < 1:
        raise DomainError("requires n > t_eff + r, t_eff >= 1, r >= 1")
    if log_gamma_n > 0.0:
        raise DomainError("gamma_n must be in (0, 1]")
    if log_gamma_n == 0.0:
        return 0.0
    if log_gamma_n == -np.inf:
        return -np.inf
    if t_eff == 1:
        return _log_beta_tail_int_b(log_gamma_n, n - r, r)
    a_j = n - t_eff - np.arange(1, r + 1) + 1.0

    def objective(alpha):
        return float(
            alpha * log_gamma_n
            + np.sum(
                scisp.gammaln(a_j - alpha)
                + scisp.gammaln(a_j + t_eff)
                - scisp.gammaln(a_j - alpha + t_eff)
                - scisp.gammaln(a_j)
            )
        )

    hi = n - t_eff - r + 1.0
    res = optimize.minimize_scalar(
        objective, bounds=(1e-9, hi - 1e-9), method="bounded", options={"xatol": 1e-10}
    )
    return min(0.0, float(res.fun), markov_log_tail(n, t_eff, r, log_gamma_n))


def _signal_gains(spec, cov, rng, size):
    """Per-mode noncentrality gains of the decoding statistic, shape (size, m_eff)."""
    h = ch.sample_channel(spec, rng, size)
    lam = ch.effective_eigenvalues(h, cov, spec)
    if isinstance(cov, ch.WaterFill):
        v, _ = water_fill_batch(lam, spec.snr)
        gains = v * lam
    else:
        gains = lam
    m_eff = min(_effective_rank(spec, cov), spec.r)
    return gains[..., :m_eff]


def sin2_statistic_sampler(spec, cov, n, method):
    """Batched sampler of the decoding statistic.

    method='exact' builds the n x r received matrix and measures the product
    of squared principal-angle sines against the transmit subspace;
    method='t-product' draws the per-mode ratio representation, which
    stochastically dominates the exact statistic (so its upper quantile is a
    valid, conservative threshold).
    """
    t_eff = _effective_rank(spec, cov)
    r = spec.r
    if n <= t_eff + r:
        raise DomainError("requires n > t_eff + r")
    if method == "t-product":

        def draw(rng, size):
            gains = _signal_gains(spec, cov, rng, size)
            m_eff = gains.shape[-1]
            s = rng.standard_gamma(n - 1.0, size=(size, m_eff))
            w = rng.standard_normal((size, m_eff, 2)) * math.sqrt(0.5)
            sig = (np.sqrt(n * gains) + w[..., 0]) ** 2 + w[..., 1] ** 2
            return np.prod(s / (sig + s), axis=-1)

        return draw
    if method == "exact":

        def draw(rng, size):
            gains = _signal_gains(spec, cov, rng, size)
            m_eff = gains.shape[-1]
            y = rng.standard_normal((size, n, r)) + 1j * rng.standard_normal((size, n, r))
            y *= math.sqrt(0.5)
            idx = np.arange(m_eff)
            y[:, idx, idx] += np.sqrt(n * gains)
            q, _ = np.linalg.qr(y)
            m_top = q[:, :t_eff, :]
            if t_eff <= r:
                g = np.eye(t_eff) - m_top @ np.conj(np.swapaxes(m_top, -1, -2))
            else:
                g = np.eye(r) - np.conj(np.swapaxes(m_top, -1, -2)) @ m_top
            return np.clip(np.linalg.det(g).real, 0.0, 1.0)

        return draw
    raise DomainError("method must be 'exact' or 't-product'")


def _default_method(spec, cov):
    return "exact" if _effective_rank(spec, cov) == 1 else "t-product"


def sample_sin2_statistic(spec, cov, n, method, rng):
    """One draw of the decoding statistic (scalar convenience wrapper)."""
    return float(sin2_statistic_sampler(spec, cov, n, method)(rng, 1)[0])


def gamma_n_ach(spec, cov, n, epsilon, tau, cfg, method=None, stream_offset=0):
    """Conservative threshold: P[statistic <= gamma_n] >= 1 - eps + tau w.h.p."""
    _check_eps_tau(epsilon, tau)
    method = method or _default_method(spec, cov)
    sampler = sin2_statistic_sampler(spec, cov, n, method)
    return mc.conservative_quantile(
        sampler, 1.0 - epsilon + tau, "upper", cfg, stream_offset + _STAT_STREAM
    )


def _check_eps_tau(epsilon, tau):
    if not (0.0 < epsilon < 1.0):
        raise DomainError("epsilon must be in (0, 1)")
    if not (0.0 < tau < epsilon):
        raise ConfigurationError("tau must satisfy 0 < tau < epsilon")


def tau_grid(n, epsilon):
    """Default tau candidates: {eps/2, eps/10, 1/n}, keeping only tau < eps."""
    cands = [epsilon / 2.0, epsilon / 10.0, 1.0 / n]
    return sorted({t for t in cands if 0.0 < t < epsilon})


def rate_lower_bound(spec, cov, n, epsilon, tau=None, cfg=None, method=None, stream_offset=0):
    """Achievability bound: rate = max(0, (ln tau - tail) / n) in nats.

    tau=None runs the default grid search and returns the best point; the
    statistic sample is drawn once and reused across the grid.
    """
    if cfg is None:
        raise DomainError("cfg is required")
    method = method or _default_method(spec, cov)
    t_eff = _effective_rank(spec, cov)
    taus = tau_grid(n, epsilon) if tau is None else [tau]
    if not taus:
        raise ConfigurationError("no feasible tau < epsilon")
    for t in taus:
        _check_eps_tau(epsilon, t)
    sampler = sin2_statistic_sampler(spec, cov, n, method)
    values = np.sort(mc.sample_values(sampler, cfg, stream_offset + _STAT_STREAM))
    best = None
    for t in taus:
        k = mc.quantile_order_indices(
            cfg.samples, 1.0 - epsilon + t, "upper", cfg.confidence_delta
        )
        gamma = float(values[k - 1])
        log_gamma = math.log(gamma) if gamma > 0.0 else -np.inf
        tail = beta_product_log_tail(n, t_eff, spec.r, min(log_gamma, 0.0))
        rate = max(0.0, (math.log(t) - tail) / n)
        if best is None or rate > best.rate_nats:
            best = BoundPoint(
                n=n, epsilon=epsilon, rate_nats=rate, side="lower", tau=t, ci=(rate, rate)
            )
    return best


def csir_kappa_beta_simo(spec, n, epsilon, tau=None, cfg=None, stream_offset=0):
    """Receiver-side-information achievability bound for t = 1.

    The information density under the true and auxiliary channels reduces,
    given the fading gain, to the same scaled noncentral chi-square laws as
    the single-antenna converse statistics, so the type-II error beta is
    evaluated semi-analytically: threshold chosen so the exact-binomial
    upper bound on the type-I failure stays below eps - tau, then beta is
    upper-bounded over an independent gain sample.
    """
    if spec.t != 1:
        raise ConfigurationError("receiver-CSI kappa-beta bound requires t = 1")
    if cfg is None:
        raise DomainError("cfg is required")
    taus = tau_grid(n, epsilon) if tau is None else [tau]
    if not taus:
        raise ConfigurationError("no feasible tau < epsilon")
    for t in taus:
        _check_eps_tau(epsilon, t)
    rho = spec.snr
    half = 0.5 * cfg.confidence_delta
    g_sel = mc.sample_values(cv._gain_sampler(spec), cfg, stream_offset + cv._SEL_STREAM)
    table_sel = cv.SimoTailTable(n, rho * g_sel)
    g_eval = mc.sample_values(cv._gain_sampler(spec), cfg, stream_offset + cv._EVAL_STREAM)
    table_eval = cv.SimoTailTable(n, rho * g_eval)
    trials = cfg.samples
    hi = float(np.max(np.log1p(rho * g_sel))) + 1.0

    best = None
    for t in taus:
        target = epsilon - t

        def f(gamma):
            return mc.cp_upper(float(np.sum(table_sel.q_s(gamma))), trials, half)

        try:
            gamma = cv._largest_below(f, target, -hi - 10.0, hi)
        except DomainError:
            continue  # type-I budget unreachable at this sample size
        log_q = table_eval.log_q_l(gamma)
        log_mean, log_up = mc.log_mean_bound(log_q, half, "upper")
        rate = max(0.0, (math.log(t) - log_up) / n)
        nominal = max(0.0, (math.log(t) - log_mean) / n)
        point = BoundPoint(
            n=n, epsilon=epsilon, rate_nats=rate, side="lower", tau=t, ci=(rate, nominal)
        )
        if best is None or rate > best.rate_nats:
            best = point
    if best is None:
        raise ConfigurationError("no tau in the grid was feasible")
    return best
