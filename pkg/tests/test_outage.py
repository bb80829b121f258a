"""Water-filling, capacity/dispersion, outage probability, epsilon-capacity."""

import itertools
import math

import numpy as np
import pytest

from fbl import channel as ch
from fbl import mc
from fbl import outage as og
from fbl.config import db_to_linear
from fbl.errors import ConfigurationError, DomainError


def _waterfill_enumeration_oracle(lam, rho):
    """Try every active-set prefix; return the unique feasible allocation."""
    m = len(lam)
    for k in range(m, 0, -1):
        active = lam[:k]
        if np.any(active <= 0):
            continue
        gbar = (rho + np.sum(1.0 / active)) / k
        v = gbar - 1.0 / active
        if np.all(v > 0) and (k == m or gbar <= 1.0 / lam[k]):
            out = np.zeros(m)
            out[:k] = v
            return out, gbar
    return np.zeros(m), math.inf


class TestWaterFill:
    def test_single_mode(self):
        alloc = og.water_fill(np.array([0.7]), 2.0)
        np.testing.assert_allclose(alloc.v, [2.0])

    def test_equal_modes(self):
        alloc = og.water_fill(np.array([1.3, 1.3, 1.3]), 3.0)
        np.testing.assert_allclose(alloc.v, [1.0, 1.0, 1.0], atol=1e-12)

    def test_inactive_mode(self):
        alloc = og.water_fill(np.array([2.0, 0.5]), 1.0)
        assert alloc.gamma_bar == pytest.approx(1.5, rel=1e-12)
        np.testing.assert_allclose(alloc.v, [1.0, 0.0], atol=1e-12)

    def test_all_zero_is_outage_certain(self):
        alloc = og.water_fill(np.array([0.0, 0.0]), 1.0)
        assert alloc.outage_certain
        np.testing.assert_allclose(alloc.v, [0.0, 0.0])

    def test_power_budget_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            m = int(rng.integers(1, 5))
            lam = np.sort(rng.exponential(1.0, m))[::-1]
            rho = float(rng.uniform(0.1, 10.0))
            alloc = og.water_fill(lam, rho)
            assert np.sum(alloc.v) == pytest.approx(rho, rel=1e-12)

    def test_active_set_enumeration_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            m = int(rng.integers(1, 6))
            lam = np.sort(rng.exponential(1.0, m))[::-1]
            rho = float(rng.uniform(0.05, 20.0))
            alloc = og.water_fill(lam, rho)
            v_oracle, gbar_oracle = _waterfill_enumeration_oracle(lam, rho)
            np.testing.assert_allclose(alloc.v, v_oracle, atol=1e-10)
            assert alloc.gamma_bar == pytest.approx(gbar_oracle, rel=1e-10)

    def test_kkt_perturbation(self):
        # moving power between active modes never improves the objective
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(10_000):
            m = int(rng.integers(2, 5))
            lam = np.sort(rng.exponential(1.0, m))[::-1]
            alloc = og.water_fill(lam, float(rng.uniform(0.5, 8.0)))
            active = np.flatnonzero(alloc.v > 1e-9)
            if len(active) < 2:
                continue
            checked += 1
            base = np.sum(np.log1p(alloc.v * lam))
            for i, j in itertools.permutations(active[:2], 2):
                v = alloc.v.copy()
                if v[i] < 1e-4:
                    continue
                v[i] -= 1e-4
                v[j] += 1e-4
                assert np.sum(np.log1p(v * lam)) <= base + 1e-9
        assert checked > 100

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        lam = np.sort(rng.exponential(1.0, (100, 3)), axis=-1)[:, ::-1]
        v, gbar = og.water_fill_batch(lam, 2.0)
        for i in range(100):
            alloc = og.water_fill(lam[i], 2.0)
            np.testing.assert_allclose(v[i], alloc.v, atol=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            og.water_fill(np.array([0.5, 2.0]), 1.0)  # not descending
        with pytest.raises(DomainError):
            og.water_fill(np.array([1.0]), -1.0)


class TestCapacityDispersion:
    def test_unit_gain(self):
        c, v = og.capacity_dispersion(np.array([1.0]), np.array([1.0]))
        assert c == pytest.approx(math.log(2.0), rel=1e-12)
        assert v == pytest.approx(0.75, rel=1e-12)

    def test_zero_gain(self):
        c, v = og.capacity_dispersion(np.array([0.5, 0.0]), np.array([0.0, 0.0]))
        assert c == 0.0 and v == 0.0

    def test_inactive_modes_do_not_count(self):
        c1, v1 = og.capacity_dispersion(np.array([2.0]), np.array([1.0]))
        c2, v2 = og.capacity_dispersion(np.array([2.0, 0.3]), np.array([1.0, 0.0]))
        assert c1 == pytest.approx(c2) and v1 == pytest.approx(v2)

    def test_isotropic_determinant_oracle(self):
        spec = ch.ChannelSpec(t=2, r=3, snr=db_to_linear(2.12), fading=ch.Rayleigh())
        h = ch.sample_channel(spec, mc.RngStream(5, 0).generator(), 20)
        lam = ch.effective_eigenvalues(h, ch.Isotropic(), spec)
        c, _ = og.capacity_dispersion(lam, np.ones_like(lam))
        q = (spec.snr / 2) * np.eye(2)
        for i in range(20):
            oracle = np.log(np.linalg.det(np.eye(2) + q @ h[i] @ h[i].conj().T)).real
            assert c[i] == pytest.approx(oracle, abs=1e-8)


class TestOutageProbability:
    spec = ch.ChannelSpec(
        t=1, r=2, snr=db_to_linear(-1.55), fading=ch.Rician(k_factor=db_to_linear(20.0))
    )
    cfg = mc.MCConfig(seed=6, samples=100_000)

    def test_rate_zero(self):
        est = og.outage_probability(self.spec, ch.WaterFill(), 0.0, self.cfg)
        assert est.p_hat == 0.0

    def test_huge_rate(self):
        est = og.outage_probability(self.spec, ch.WaterFill(), 1e6, self.cfg)
        assert est.p_hat == 1.0

    def test_published_operating_point(self):
        est = og.outage_probability(self.spec, ch.WaterFill(), math.log(2.0), self.cfg)
        assert est.cp_lower <= 1.35e-3 and est.cp_upper >= 0.75e-3

    def test_monotone_in_rate(self):
        rates = np.linspace(0.3, 1.2, 7)
        ests = [og.outage_probability(self.spec, ch.WaterFill(), float(r), self.cfg) for r in rates]
        for a, b in zip(ests, ests[1:]):
            assert b.cp_upper >= a.cp_lower

    def test_waterfill_dominates_isotropic(self):
        spec = ch.ChannelSpec(t=2, r=2, snr=2.0, fading=ch.Rayleigh())
        wf = og.outage_probability(spec, ch.WaterFill(), 0.8, self.cfg)
        iso = og.outage_probability(spec, ch.Isotropic(), 0.8, self.cfg)
        assert wf.cp_lower <= iso.cp_upper


class TestEpsilonCapacity:
    cfg = mc.MCConfig(seed=7, samples=200_000)

    def test_degenerate_fading_epsilon_independent(self):
        spec = ch.ChannelSpec(t=1, r=1, snr=1.0, fading=ch.Rician(k_factor=1e12))
        a = og.epsilon_capacity(spec, ch.WaterFill(), 1e-3, self.cfg)
        b = og.epsilon_capacity(spec, ch.WaterFill(), 0.3, self.cfg)
        assert a.value == pytest.approx(math.log(2.0), abs=1e-4)
        assert a.value == pytest.approx(b.value, abs=1e-4)

    def test_simo_rician_one_bit(self):
        spec = ch.ChannelSpec(
            t=1, r=2, snr=db_to_linear(-1.55), fading=ch.Rician(k_factor=db_to_linear(20.0))
        )
        q = og.epsilon_capacity(spec, ch.WaterFill(), 1e-3, self.cfg)
        assert q.value / math.log(2.0) == pytest.approx(1.0, abs=0.01)

    def test_iso_rayleigh_one_bit(self):
        spec = ch.ChannelSpec(t=2, r=3, snr=db_to_linear(2.12), fading=ch.Rayleigh())
        q = og.epsilon_capacity(spec, ch.Isotropic(), 1e-3, self.cfg)
        assert q.value / math.log(2.0) == pytest.approx(1.0, abs=0.01)

    def test_quantile_instability_guard(self):
        spec = ch.ChannelSpec(t=1, r=1, snr=1.0, fading=ch.Rayleigh())
        with pytest.raises(ConfigurationError):
            og.epsilon_capacity(spec, ch.WaterFill(), 1e-4, mc.MCConfig(seed=1, samples=1000))
