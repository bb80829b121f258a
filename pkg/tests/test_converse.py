"""Converse bounds: conditional tail laws, rate upper bounds, asymptotic constants."""

import math

import numpy as np
import pytest
from scipy import stats

from fbl import channel as ch
from fbl import converse as cv
from fbl import mc
from fbl import outage as og
from fbl.config import db_to_linear
from fbl.errors import DomainError

FIG2_SPEC = ch.ChannelSpec(
    t=1, r=2, snr=db_to_linear(-1.55), fading=ch.Rician(k_factor=db_to_linear(20.0))
)
FIG3_SPEC = ch.ChannelSpec(t=2, r=3, snr=db_to_linear(2.12), fading=ch.Rayleigh())


def _rng(i=0):
    return mc.RngStream(300, i).generator()


def _direct_statistics(n, a, rng, size):
    """S/n and L/n from the raw complex-Gaussian double sums (oracle route)."""
    z = (rng.standard_normal((size, n)) + 1j * rng.standard_normal((size, n))) * math.sqrt(0.5)
    head = math.log1p(a) + 1.0
    a_s = np.sum(np.abs(math.sqrt(a) * z - 1.0) ** 2, axis=1)
    a_l = np.sum(np.abs(math.sqrt(a) * z - math.sqrt(1.0 + a)) ** 2, axis=1)
    s = head - a_s / ((1.0 + a) * n)
    l = head - a_l / n
    return s, l


class TestSimoConditionalTails:
    def test_zero_gain_degenerate(self):
        for n in (1, 17):
            for gamma, want_s, want_l in ((-1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (1.0, 1.0, 0.0)):
                p = cv.ConditionalTailParams(n=n, g=0.0, rho=2.0)
                assert cv.simo_conditional_tails(p, gamma) == (want_s, want_l)

    def test_threshold_at_zero_gives_one(self):
        a = 0.7
        p = cv.ConditionalTailParams(n=20, g=1.0, rho=a)
        gamma = math.log1p(a) + 1.0
        p_s, _ = cv.simo_conditional_tails(p, gamma)
        assert p_s == 1.0

    def test_negative_gain_rejected(self):
        with pytest.raises(DomainError):
            cv.simo_conditional_tails(cv.ConditionalTailParams(n=5, g=-0.1, rho=1.0), 0.0)

    def test_direct_sum_monte_carlo_oracle(self):
        # the chi-square reduction is not printed anywhere: check both closed
        # forms against raw Gaussian double sums with exact binomial intervals
        n, a, gamma = 50, 1.0, 0.5
        p_s, p_l = cv.simo_conditional_tails(cv.ConditionalTailParams(n=n, g=1.0, rho=a), gamma)
        rng = _rng(1)
        draws, batch = 2_000_000, 100_000
        s_hits = l_hits = 0
        for _ in range(draws // batch):
            s, l = _direct_statistics(n, a, rng, batch)
            s_hits += int(np.sum(s <= gamma))
            l_hits += int(np.sum(l >= gamma))
        assert mc.cp_lower(s_hits, draws, 1e-4) <= p_s <= mc.cp_upper(s_hits, draws, 1e-4)
        assert mc.cp_lower(l_hits, draws, 1e-4) <= p_l <= mc.cp_upper(l_hits, draws, 1e-4)
        # the auxiliary tail is far below Monte Carlo resolution here: make
        # sure the interval check was not vacuously wide on the data side
        assert p_s > 0.01

    @pytest.mark.parametrize("n", [10, 100])
    @pytest.mark.parametrize("a", [0.1, 1.0, 10.0])
    def test_chi2_reduction_matches_direct_sums_ks(self, n, a):
        import fbl.specfun as sf

        size = 20_000
        rng_dir = _rng(2 + n)
        rng_imp = _rng(1000 + n)
        s_dir, l_dir = _direct_statistics(n, a, rng_dir, size)
        head = math.log1p(a) + 1.0
        s_imp = head - (a / (2.0 * (1.0 + a))) * sf.sample_noncentral_chi2(
            2 * n, np.full(size, 2.0 * n / a), rng_imp
        ) / n
        l_imp = head - (a / 2.0) * sf.sample_noncentral_chi2(
            2 * n, np.full(size, 2.0 * n * (1.0 + a) / a), rng_imp
        ) / n
        assert stats.ks_2samp(s_dir, s_imp).pvalue > 0.01
        assert stats.ks_2samp(l_dir, l_imp).pvalue > 0.01


class TestSimoTailTable:
    def test_matches_pointwise_evaluation(self):
        n = 40
        rng = _rng(3)
        a = 0.8 * rng.chisquare(4, size=50) / 4.0
        table = cv.SimoTailTable(n, a)
        for gamma in (0.1, 0.5, 1.0):
            qs = table.q_s(gamma)
            ql = table.log_q_l(gamma)
            for i in range(a.size):
                p = cv.ConditionalTailParams(n=n, g=float(a[i]), rho=1.0)
                p_s, p_l = cv.simo_conditional_tails(p, gamma)
                assert qs[i] == pytest.approx(p_s, abs=2e-4)
                if p_l > 0 and math.log(p_l) > -400:
                    assert ql[i] == pytest.approx(math.log(p_l), abs=2e-3)

    def test_tiny_gains_treated_as_degenerate(self):
        table = cv.SimoTailTable(100, np.array([1e-12, 1e-11]))
        assert np.all(table.q_s(0.5) == 1.0)
        assert np.all(table.q_s(-0.5) == 0.0)
        assert np.all(table.log_q_l(-0.5) == 0.0)
        assert np.all(np.isneginf(table.log_q_l(0.5)))

    def test_rejects_negative_gains(self):
        with pytest.raises(DomainError):
            cv.SimoTailTable(10, np.array([-1.0]))


class TestConverseSimo:
    def test_requires_single_transmit_antenna(self):
        cfg = mc.MCConfig(seed=1, samples=1000)
        with pytest.raises(DomainError):
            cv.converse_simo(FIG3_SPEC, 100, 1e-3, cfg)

    def test_epsilon_domain(self):
        cfg = mc.MCConfig(seed=1, samples=1000)
        with pytest.raises(DomainError):
            cv.converse_simo(FIG2_SPEC, 100, 1.5, cfg)
        with pytest.raises(DomainError):
            cv.converse_simo(FIG2_SPEC, 1, 1e-3, cfg)

    def test_degenerate_fading_awgn_limit(self):
        # near-deterministic gain: at the median error level the dispersion
        # term vanishes and the bound must approach the nonfading capacity
        spec = ch.ChannelSpec(t=1, r=1, snr=1.0, fading=ch.Rician(k_factor=1e12))
        cfg = mc.MCConfig(seed=4, samples=20_000)
        point = cv.converse_simo(spec, 2000, 0.5, cfg)
        assert abs(point.rate_nats - math.log(2.0)) < 0.05 * math.log(2.0)

    def test_degenerate_fading_matches_nonfading_reference(self):
        # at small error rates the bound tracks the classical nonfading
        # second-order value C - sqrt(V/n) Qinv(eps) + log(n)/(2n)
        from fbl import approx as ap

        spec = ch.ChannelSpec(t=1, r=1, snr=1.0, fading=ch.Rician(k_factor=1e12))
        cfg = mc.MCConfig(seed=4, samples=20_000)
        point = cv.converse_simo(spec, 2000, 1e-3, cfg)
        ref = ap.awgn_reference_rate(1.0, 1999, 1e-3)
        assert abs(point.rate_nats - ref) < 0.02 * math.log(2)

    def test_fig2_level_at_n_400(self):
        # near-deterministic Rician fading keeps a visible dispersion penalty
        # at this blocklength: the bound sits a little below the one-bit
        # epsilon-capacity and climbs toward it
        cfg = mc.MCConfig(seed=5, samples=100_000)
        point = cv.converse_simo(FIG2_SPEC, 401, 1e-3, cfg)
        assert point.n == 400
        assert point.side == "upper"
        assert 0.95 <= point.rate_nats / math.log(2) <= 1.02

    def test_monotone_in_epsilon(self):
        cfg = mc.MCConfig(seed=6, samples=20_000)
        r_lo = cv.converse_simo(FIG2_SPEC, 200, 0.1, cfg).rate_nats
        r_hi = cv.converse_simo(FIG2_SPEC, 200, 0.5, cfg).rate_nats
        assert r_hi > r_lo

    def test_nonincreasing_toward_epsilon_capacity(self):
        cfg = mc.MCConfig(seed=7, samples=50_000)
        c_eps = og.epsilon_capacity(FIG2_SPEC, ch.WaterFill(), 1e-3, cfg).value
        near = cv.converse_simo(FIG2_SPEC, 801, 1e-3, cfg).rate_nats
        far = cv.converse_simo(FIG2_SPEC, 201, 1e-3, cfg).rate_nats
        slack = 0.05 * math.log(2)
        assert abs(near - c_eps) <= abs(far - c_eps) + slack


class TestConverseIso:
    def test_epsilon_and_blocklength_domain(self):
        cfg = mc.MCConfig(seed=1, samples=1000)
        with pytest.raises(DomainError):
            cv.converse_iso(FIG3_SPEC, 100, 0.0, cfg)
        with pytest.raises(DomainError):
            cv.converse_iso(FIG3_SPEC, 0, 1e-3, cfg)

    def test_vanishing_channel_rate_near_zero(self):
        spec = ch.ChannelSpec(t=1, r=1, snr=1e-12, fading=ch.Rayleigh())
        cfg = mc.MCConfig(seed=2, samples=5_000)
        point = cv.converse_iso(spec, 100, 1e-3, cfg)
        assert 0.0 <= point.rate_nats < 0.01

    def test_single_antenna_statistic_matches_gain_mixture_ks(self):
        # t = 1: the isotropic statistic law must coincide with the gain
        # mixture of the scalar chi-square laws (independent scipy route)
        n, size = 60, 20_000
        draw = cv.iso_statistic_sampler(FIG2_SPEC, n, "S")
        impl = draw(_rng(10), size)
        rng = _rng(11)
        h = ch.sample_channel(FIG2_SPEC, rng, size)
        a = FIG2_SPEC.snr * np.sum(np.abs(h) ** 2, axis=(-2, -1))
        x = stats.ncx2.rvs(2 * n, 2.0 * n / a, random_state=rng)
        oracle = np.log1p(a) + 1.0 - (a / (2.0 * (1.0 + a))) * x / n
        assert stats.ks_2samp(impl, oracle).pvalue > 0.01

    def test_auxiliary_statistic_matches_gain_mixture_ks(self):
        n, size = 60, 20_000
        draw = cv.iso_statistic_sampler(FIG2_SPEC, n, "L")
        impl = draw(_rng(12), size)
        rng = _rng(13)
        h = ch.sample_channel(FIG2_SPEC, rng, size)
        a = FIG2_SPEC.snr * np.sum(np.abs(h) ** 2, axis=(-2, -1))
        x = stats.ncx2.rvs(2 * n, 2.0 * n * (1.0 + a) / a, random_state=rng)
        oracle = np.log1p(a) + 1.0 - (a / 2.0) * x / n
        assert stats.ks_2samp(impl, oracle).pvalue > 0.01

    def test_sampler_kind_validated(self):
        with pytest.raises(DomainError):
            cv.iso_statistic_sampler(FIG3_SPEC, 10, "X")

    def test_fig3_levels(self):
        cfg = mc.MCConfig(seed=3, samples=50_000)
        near = cv.converse_iso(FIG3_SPEC, 800, 1e-3, cfg).rate_nats / math.log(2)
        far = cv.converse_iso(FIG3_SPEC, 120, 1e-3, cfg).rate_nats / math.log(2)
        assert far >= 0.9
        assert near >= 0.9
        # approaches the one-bit limit from above
        assert near >= 1.0 - 0.01
        assert near <= far + 0.02


class TestAsymptoticConstants:
    cfg = mc.MCConfig(seed=8, samples=100_000)

    def test_bracket_collapse_at_n_1(self):
        spec = ch.ChannelSpec(t=1, r=1, snr=2.0, fading=ch.Rayleigh())
        val = cv.log_c_csirt(spec, 1, self.cfg)
        # E[det(I + rho h h*)] = 1 + rho exactly for a unit-variance entry
        assert val == pytest.approx(math.log(3.0), abs=0.01)

    def test_single_receive_antenna_collapse(self):
        # with one antenna on each side and moment exponent 1, both constants
        # reduce to the same bracket-plus-mean expression
        spec = ch.ChannelSpec(t=1, r=1, snr=1.5, fading=ch.Rayleigh())
        a = cv.log_c_csirt(spec, 50, self.cfg)
        b = cv.log_c_csir(spec, 50, self.cfg)
        assert a == pytest.approx(b, abs=0.02)

    def test_csirt_normalized_growth_bounded(self):
        spec = ch.ChannelSpec(t=2, r=2, snr=1.0, fading=ch.Rayleigh())
        vals = [cv.log_c_csirt(spec, n, self.cfg) - 0.5 * spec.m * math.log(n) for n in (10, 100, 1000)]
        assert max(vals) - min(vals) < 1.0

    def test_csir_normalized_growth_bounded(self):
        spec = ch.ChannelSpec(t=2, r=2, snr=1.0, fading=ch.Rayleigh())
        vals = [cv.log_c_csir(spec, n, self.cfg) - 0.5 * spec.r**2 * math.log(n) for n in (10, 100, 1000)]
        assert max(vals) - min(vals) < 1.5

    def test_csir_moment_stable_across_seeds(self):
        spec = ch.ChannelSpec(t=2, r=2, snr=1.0, fading=ch.Rayleigh())
        vals = [cv.log_c_csir(spec, 100, mc.MCConfig(seed=s, samples=100_000)) for s in (1, 2, 3)]
        assert max(vals) - min(vals) < 0.05

    def test_csir_blocklength_domain(self):
        spec = ch.ChannelSpec(t=2, r=3, snr=1.0, fading=ch.Rayleigh())
        with pytest.raises(DomainError):
            cv.log_c_csir(spec, 2, self.cfg)
