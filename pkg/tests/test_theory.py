import math
import warnings

import numpy as np
import pytest

from mers.errors import DomainError, PreconditionError
from mers.theory import (
    CASES,
    GaussianSpec,
    RiskGapSetup,
    closed_form_vs_generic,
    empirical_risk_gap,
    equal_volume_alpha,
    kl_closed_forms,
    kl_gaussian,
    linear_rule,
    monte_carlo_kl,
    monte_carlo_tv,
    proxy_spec,
    random_spd,
    risk_gap_bound,
    sl_minus_ssl1,
    sqrtm_spd,
    verify_anisotropy_props,
)

SL_EXAMPLE = GaussianSpec(kind="SL", sigma=0.5, alpha=2.5, beta=0.1, m=1, base=np.eye(2))


class TestKL:
    def test_identity(self):
        S = random_spd(np.random.default_rng(0), 4)
        assert kl_gaussian(S, S) == pytest.approx(0.0, abs=1e-12)

    def test_hand_value(self):
        assert kl_gaussian(np.eye(2), 0.5 * np.eye(2)) == pytest.approx(1 + math.log(0.5), abs=1e-15)
        assert kl_gaussian(np.eye(2), 0.5 * np.eye(2)) == pytest.approx(0.306853, abs=1e-6)

    def test_asymmetric(self):
        assert abs(kl_gaussian(np.eye(2), 0.5 * np.eye(2)) - kl_gaussian(0.5 * np.eye(2), np.eye(2))) > 0.1

    def test_non_negative(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            assert kl_gaussian(random_spd(rng, n), random_spd(rng, n)) >= -1e-12

    @pytest.mark.parametrize("bad", [np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([[1.0, 0.5], [0.0, 1.0]])])
    def test_non_spd(self, bad):
        with pytest.raises(DomainError):
            kl_gaussian(np.eye(2), bad)

    def test_sqrtm(self):
        S = random_spd(np.random.default_rng(2), 5)
        R = sqrtm_spd(S)
        np.testing.assert_allclose(R @ R, S, atol=1e-12)


class TestClosedForms:
    def test_ssl1_identity(self):
        assert kl_closed_forms(proxy_spec("SSL1", np.eye(3), 1.0), "SSL1") == 0.0

    def test_ssl1_example(self):
        assert kl_closed_forms(proxy_spec("SSL1", np.eye(2), 0.5), "SSL1") == pytest.approx(0.306853, abs=1e-6)

    def test_sl_example(self):
        v = kl_closed_forms(SL_EXAMPLE, "SL_i1")
        assert v == pytest.approx(0.5 * (1 / 2.5 + 1 / 0.1 - 2 + 2 * math.log(0.5)), abs=1e-14)
        assert v == pytest.approx(3.506853, abs=1e-6)
        assert kl_gaussian(np.eye(2), SL_EXAMPLE.covariance()) == pytest.approx(v, abs=1e-12)

    @pytest.mark.parametrize("case", CASES)
    def test_vs_generic(self, case):
        assert closed_form_vs_generic(case, draws=100, seed=3) <= 1e-10

    def test_precondition(self):
        spec = GaussianSpec(kind="SL", sigma=0.5, alpha=3.0, beta=0.1, m=1, base=np.eye(2))
        with pytest.raises(PreconditionError, match="residual"):
            kl_closed_forms(spec, "SL_i1")

    def test_unknown_case(self):
        with pytest.raises(DomainError):
            kl_closed_forms(SL_EXAMPLE, "SL_i3")


class TestEqualVolume:
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_fixed_point(self):
        assert equal_volume_alpha(0.7, 2, 5, 0.7) == pytest.approx(0.7, rel=1e-14)

    def test_example(self):
        assert equal_volume_alpha(0.1, 1, 2, 0.5) == pytest.approx(2.5, rel=1e-14)

    def test_identity_base(self):
        assert equal_volume_alpha(0.1, 2, 4, 0.5, 1.0) == equal_volume_alpha(0.1, 2, 4, 0.5)

    def test_determinant_recomputed(self):
        a = equal_volume_alpha(0.05, 2, 5, 0.4, 3.0)
        assert a**2 * 0.05**3 == pytest.approx(0.4**5 / 3.0, rel=1e-12)

    def test_warns_when_alpha_not_above_beta(self):
        with pytest.warns(RuntimeWarning):
            equal_volume_alpha(0.9, 1, 2, 0.5)

    def test_overflow(self):
        with pytest.raises(OverflowError):
            equal_volume_alpha(1e-300, 1, 10, 1.0)

    @pytest.mark.parametrize("kw", [dict(beta=0.0), dict(sigma=-1.0), dict(m=0), dict(m=3)])
    def test_domain(self, kw):
        args = dict(beta=0.1, m=1, n=3, sigma=0.5) | kw
        with pytest.raises(DomainError):
            equal_volume_alpha(**args)


class TestPropositions:
    def test_equality_case(self):
        assert sl_minus_ssl1(4, 2, 0.6, 0.6) == pytest.approx(0.0, abs=1e-12)

    def test_example_difference(self):
        assert sl_minus_ssl1(2, 1, 0.5, 0.1) == pytest.approx(3.2, abs=1e-12)

    def test_i1_grid(self):
        grid = [(n, m, s, b) for n in (2, 5) for m in range(1, n) for s in (0.3, 0.8) for b in (s, s / 10, s / 2)]
        rep = verify_anisotropy_props(grid, "i1")
        assert rep.passed and rep.checked == len(grid)

    def test_i2_example(self):
        rep = verify_anisotropy_props([1], "i2", base=np.diag([2.0, 0.5]), sigma=1.0)
        assert rep.passed and rep.beta0 is not None and 0 < rep.beta0 < math.inf

    def test_i2_ratios_increase(self):
        base = random_spd(np.random.default_rng(4), 4)
        rep = verify_anisotropy_props(range(1, 4), "i2", base=base)
        assert rep.passed
        for r in rep.ratios:
            assert all(b > a for a, b in zip(r, r[1:]))


class TestMonteCarlo:
    def test_same(self):
        p = GaussianSpec(cov=np.eye(3))
        est, se = monte_carlo_kl(p, p, 10**4, seed=0)
        assert est == 0.0 and se == 0.0

    def test_ssl1(self):
        est, se = monte_carlo_kl(GaussianSpec(cov=np.eye(2)), GaussianSpec(cov=0.5 * np.eye(2)), 10**6, seed=1)
        assert abs(est - (1 + math.log(0.5))) <= 3 * se

    def test_sl(self):
        est, se = monte_carlo_kl(GaussianSpec(cov=np.eye(2)), GaussianSpec(cov=SL_EXAMPLE.covariance()), 10**6,
                                 seed=2)
        assert abs(est - kl_closed_forms(SL_EXAMPLE, "SL_i1")) <= 3 * se

    def test_too_few_samples(self):
        p = GaussianSpec(cov=np.eye(2))
        with pytest.raises(DomainError):
            monte_carlo_kl(p, p, 100)

    def test_pinsker(self):
        rng = np.random.default_rng(5)
        for seed in range(5):
            n = int(rng.integers(1, 4))
            p, q = GaussianSpec(cov=random_spd(rng, n)), GaussianSpec(cov=random_spd(rng, n))
            tv, se = monte_carlo_tv(p, q, 10**5, seed=seed)
            assert tv <= math.sqrt(kl_gaussian(p.cov, q.cov) / 2) + 3 * se


class TestRiskGap:
    def test_bound_values(self):
        assert risk_gap_bound(0.7, 0.0) == 0.0
        # exact value 0.1958484...; the commonly quoted 0.195853 is a rounding slip
        assert risk_gap_bound(0.5, 1 + math.log(0.5)) == pytest.approx(0.1958484, abs=1e-7)
        assert risk_gap_bound(0.5, 1 + math.log(0.5)) == pytest.approx(0.195853, abs=1e-5)
        assert risk_gap_bound(1.0, 2.0) == 1.0
        assert risk_gap_bound(0.5, kl_closed_forms(SL_EXAMPLE, "SL_i1")) == pytest.approx(0.6620, abs=1e-4)

    @pytest.mark.parametrize("pi1,kl", [(0.0, 1.0), (1.5, 1.0), (0.5, -0.1)])
    def test_bound_domain(self, pi1, kl):
        with pytest.raises(DomainError):
            risk_gap_bound(pi1, kl)

    def _setup(self, train_cov, pi1=0.5):
        g0 = GaussianSpec(cov=np.eye(2))
        other = GaussianSpec(cov=np.eye(2), mean=np.array([2.0, 0.0]))
        return RiskGapSetup(pi1, g0, GaussianSpec(cov=train_cov), [other], [1 - pi1])

    def test_no_shift(self):
        res = empirical_risk_gap(self._setup(np.eye(2)), samples=10**5, seed=0)
        assert res.bound == 0.0 and res.within_bound

    def test_ssl1_shift(self):
        res = empirical_risk_gap(self._setup(0.5 * np.eye(2)), samples=10**5, seed=1)
        assert res.bound == pytest.approx(0.1958484, abs=1e-7) and res.within_bound

    def test_linear_rule(self):
        res = empirical_risk_gap(self._setup(SL_EXAMPLE.covariance()), linear_rule([-1.0, 0.0], 1.0),
                                 samples=10**5, seed=2)
        assert res.within_bound

    def test_priors_checked(self):
        with pytest.raises(DomainError):
            RiskGapSetup(0.5, GaussianSpec(cov=np.eye(1)), GaussianSpec(cov=np.eye(1)),
                         [GaussianSpec(cov=np.eye(1))], [0.4])
