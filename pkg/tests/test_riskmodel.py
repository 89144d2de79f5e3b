import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from quorum.riskmodel import (
    EnumerationCeilingError,
    FailureEstimate,
    InfeasibleThresholdError,
    ModelErrorProfile,
    RiskParameters,
    beta_binomial_pmf,
    divergent_count_threshold,
    effective_sample_size,
    estimate_failure,
    failure_probability_exact,
    failure_probability_mc,
    hoeffding_bound,
    required_samples,
)


def quadrature_pmf(z: int, m: int, mu: float, rho: float) -> float:
    """Oracle: integrate the Beta mixing density against the binomial kernel."""
    concentration = 1.0 / rho - 1.0
    a, b = mu * concentration, (1.0 - mu) * concentration
    comb = math.comb(m, z)
    norm = special.beta(a, b)

    def integrand(p: float) -> float:
        return (p ** (a - 1) * (1 - p) ** (b - 1) / norm) * comb * p**z * (1 - p) ** (m - z)

    value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return value


class TestBetaBinomialPmf:
    def test_binomial_limit_point(self):
        assert beta_binomial_pmf(0, 4, 0.1, 1e-13) == pytest.approx(0.9**4, abs=1e-12)

    def test_normalization_grid(self):
        for m in (1, 4, 17, 32):
            for mu in (0.01, 0.1, 0.5, 0.9):
                for rho in (0.0, 1e-10, 0.1, 0.5, 0.9, 0.999):
                    total = math.fsum(beta_binomial_pmf(z, m, mu, rho) for z in range(m + 1))
                    assert total == pytest.approx(1.0, abs=1e-9)

    def test_binomial_limit_grid(self):
        for m in (2, 8, 32):
            for mu in (0.05, 0.3, 0.7):
                reference = stats.binom.pmf(np.arange(m + 1), m, mu)
                ours = [beta_binomial_pmf(z, m, mu, 1e-10) for z in range(m + 1)]
                assert np.max(np.abs(np.array(ours) - reference)) <= 1e-6

    def test_quadrature_oracle_agreement(self):
        for z in range(5):
            expected = quadrature_pmf(z, 4, 0.1, 0.5)
            assert beta_binomial_pmf(z, 4, 0.1, 0.5) == pytest.approx(expected, abs=1e-8)

    def test_overdispersion_fattens_tails(self):
        # At the same mean, correlation moves mass toward all-or-nothing.
        assert beta_binomial_pmf(4, 4, 0.1, 0.5) > beta_binomial_pmf(4, 4, 0.1, 1e-13)

    def test_rho_one_clamps_to_all_or_nothing(self):
        assert beta_binomial_pmf(0, 6, 0.2, 1.0) == pytest.approx(0.8, abs=1e-6)
        assert beta_binomial_pmf(6, 6, 0.2, 1.0) == pytest.approx(0.2, abs=1e-6)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            beta_binomial_pmf(5, 4, 0.1, 0.5)
        with pytest.raises(ValueError):
            beta_binomial_pmf(-1, 4, 0.1, 0.5)
        with pytest.raises(ValueError):
            beta_binomial_pmf(0, 4, 0.0, 0.5)
        with pytest.raises(ValueError):
            beta_binomial_pmf(0, 4, 1.0, 0.5)
        with pytest.raises(ValueError):
            beta_binomial_pmf(0, 4, 0.1, 1.5)


class TestDivergentCountThreshold:
    def test_fractional_rounds_up(self):
        assert divergent_count_threshold(0.7, 16) == 12

    def test_integer_boundary_included(self):
        # tau * N landing on an integer is itself a failure count.
        assert divergent_count_threshold(0.75, 16) == 12
        assert divergent_count_threshold(0.75, 4) == 3
        assert divergent_count_threshold(0.5, 2) == 1

    def test_full_unanimity(self):
        assert divergent_count_threshold(1.0, 7) == 7


class TestFailureProbabilityExact:
    def test_independent_illustration(self):
        params = RiskParameters.homogeneous(4, 4, 0.1, 1e-10, 0.7)
        p = failure_probability_exact(params)
        assert 1e-9 <= p <= 1e-7

    def test_correlated_illustration(self):
        params = RiskParameters.homogeneous(4, 4, 0.1, 0.5, 0.7)
        p = failure_probability_exact(params)
        assert 1e-5 <= p <= 1e-3

    def test_correlation_gap_is_orders_of_magnitude(self):
        independent = failure_probability_exact(RiskParameters.homogeneous(4, 4, 0.1, 1e-10, 0.7))
        correlated = failure_probability_exact(RiskParameters.homogeneous(4, 4, 0.1, 0.5, 0.7))
        assert correlated / independent > 1e4

    def test_tau_one_is_product_of_all_divergent(self):
        params = RiskParameters(
            profiles=(
                ModelErrorProfile(mu=0.2, rho=0.3, samples=3),
                ModelErrorProfile(mu=0.4, rho=0.1, samples=2),
            ),
            tau=1.0,
        )
        expected = beta_binomial_pmf(3, 3, 0.2, 0.3) * beta_binomial_pmf(2, 2, 0.4, 0.1)
        assert failure_probability_exact(params) == pytest.approx(expected, rel=1e-12)

    def test_matches_binomial_tail_at_rho_zero(self):
        # With independent samples the pooled count is Binomial(N, mu).
        for k, m, mu, tau in [(2, 3, 0.3, 0.6), (3, 4, 0.15, 0.75), (1, 8, 0.4, 0.5)]:
            params = RiskParameters.homogeneous(k, m, mu, 0.0, tau)
            n = k * m
            t = divergent_count_threshold(tau, n)
            expected = float(stats.binom.sf(t - 1, n, mu))
            assert failure_probability_exact(params) == pytest.approx(expected, rel=1e-10)

    def test_heterogeneous_profiles(self):
        params = RiskParameters(
            profiles=(
                ModelErrorProfile(mu=0.05, rho=0.1, samples=4),
                ModelErrorProfile(mu=0.2, rho=0.4, samples=2),
                ModelErrorProfile(mu=0.1, rho=0.0, samples=3),
            ),
            tau=0.7,
        )
        p = failure_probability_exact(params)
        assert 0.0 < p < 1.0

    def test_enumeration_ceiling(self):
        params = RiskParameters.homogeneous(4, 100, 0.1, 0.0, 0.7)
        with pytest.raises(EnumerationCeilingError):
            failure_probability_exact(params)
        assert failure_probability_exact(params, enumeration_ceiling=400) > 0.0

    def test_monotone_nonincreasing_in_tau(self):
        taus = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        for rho in (0.0, 0.3):
            values = [
                failure_probability_exact(RiskParameters.homogeneous(3, 4, 0.2, rho, tau))
                for tau in taus
            ]
            assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))

    def test_monotone_nondecreasing_in_mu(self):
        mus = [0.05, 0.1, 0.2, 0.3, 0.5]
        for rho in (0.0, 0.4):
            values = [
                failure_probability_exact(RiskParameters.homogeneous(3, 4, mu, rho, 0.7))
                for mu in mus
            ]
            assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))
        # also per-model: raising one model's mu cannot lower the risk
        base = RiskParameters(
            profiles=(
                ModelErrorProfile(mu=0.1, rho=0.2, samples=4),
                ModelErrorProfile(mu=0.1, rho=0.2, samples=4),
            ),
            tau=0.7,
        )
        bumped = RiskParameters(
            profiles=(
                ModelErrorProfile(mu=0.3, rho=0.2, samples=4),
                ModelErrorProfile(mu=0.1, rho=0.2, samples=4),
            ),
            tau=0.7,
        )
        assert failure_probability_exact(bumped) >= failure_probability_exact(base)


class TestFailureProbabilityMc:
    def test_same_seed_identical(self):
        params = RiskParameters.homogeneous(2, 3, 0.3, 0.3, 0.6)
        a = failure_probability_mc(params, trials=20_000, seed=7)
        b = failure_probability_mc(params, trials=20_000, seed=7)
        assert a == b

    def test_different_seed_differs(self):
        params = RiskParameters.homogeneous(2, 3, 0.3, 0.3, 0.6)
        a = failure_probability_mc(params, trials=20_000, seed=7)
        b = failure_probability_mc(params, trials=20_000, seed=8)
        assert a != b

    def test_agrees_with_exact_within_three_stderr(self):
        params = RiskParameters.homogeneous(2, 3, 0.3, 0.3, 0.6)
        exact = failure_probability_exact(params)
        estimate, stderr = failure_probability_mc(params, trials=200_000, seed=11)
        assert abs(estimate - exact) <= 3 * stderr

    def test_agrees_on_heterogeneous_fixture(self):
        params = RiskParameters(
            profiles=(
                ModelErrorProfile(mu=0.25, rho=0.5, samples=3),
                ModelErrorProfile(mu=0.4, rho=0.0, samples=2),
            ),
            tau=0.6,
        )
        exact = failure_probability_exact(params)
        estimate, stderr = failure_probability_mc(params, trials=200_000, seed=3)
        assert abs(estimate - exact) <= 3 * stderr

    def test_near_zero_error_rate(self):
        params = RiskParameters.homogeneous(2, 2, 1e-6, 0.0, 0.5)
        estimate, stderr = failure_probability_mc(params, trials=10_000, seed=5)
        assert estimate == 0.0
        assert stderr == 0.0

    def test_reproducible_for_fixed_seed_and_chunking(self):
        params = RiskParameters.homogeneous(2, 3, 0.3, 0.3, 0.6)
        a = failure_probability_mc(params, trials=30_000, seed=9, chunk_size=7_000)
        b = failure_probability_mc(params, trials=30_000, seed=9, chunk_size=7_000)
        assert a == b

    def test_minimum_trials(self):
        params = RiskParameters.homogeneous(2, 3, 0.3, 0.3, 0.6)
        with pytest.raises(ValueError):
            failure_probability_mc(params, trials=10, seed=0)


class TestEffectiveSampleSize:
    def test_independence(self):
        assert effective_sample_size(4, 4, 0.0) == 16.0

    def test_full_correlation_collapses_to_k(self):
        assert effective_sample_size(4, 4, 1.0) == pytest.approx(4.0)

    def test_half_correlation(self):
        assert effective_sample_size(4, 4, 0.5) == pytest.approx(6.4)

    def test_saturation_in_m(self):
        # As M grows the effective size approaches K / rho.
        assert effective_sample_size(4, 10_000, 0.5) == pytest.approx(8.0, rel=1e-3)

    def test_domain(self):
        with pytest.raises(ValueError):
            effective_sample_size(0, 4, 0.5)
        with pytest.raises(ValueError):
            effective_sample_size(4, 4, 1.5)


class TestHoeffdingBound:
    def test_fixture(self):
        assert hoeffding_bound(16, 0.7, 0.1) == pytest.approx(math.exp(-11.52), rel=1e-12)

    def test_vacuous_at_zero_effective_samples(self):
        assert hoeffding_bound(0.0, 0.7, 0.1) == 1.0

    def test_doubling_margin_quadruples_exponent(self):
        narrow = hoeffding_bound(10, 0.6, 0.4)  # margin 0.2
        wide = hoeffding_bound(10, 0.8, 0.4)  # margin 0.4
        assert math.log(wide) == pytest.approx(4 * math.log(narrow), rel=1e-9)

    def test_infeasible_threshold(self):
        with pytest.raises(InfeasibleThresholdError):
            hoeffding_bound(16, 0.3, 0.3)
        with pytest.raises(InfeasibleThresholdError):
            hoeffding_bound(16, 0.2, 0.3)

    def test_dominates_binomial_tail_under_independence(self):
        # Hoeffding's inequality holds exactly for iid samples.
        for n in (4, 16, 33, 64):
            for tau in (0.55, 0.65, 0.75, 0.85, 0.95):
                for mu in (0.05, 0.2, 0.4):
                    if mu >= tau:
                        continue
                    t = divergent_count_threshold(tau, n)
                    tail = float(stats.binom.sf(t - 1, n, mu))
                    assert hoeffding_bound(n, tau, mu) >= tail - 1e-15


class TestRequiredSamples:
    def test_design_fixture(self):
        assert required_samples(4, 0.7, 0.1, 0.0, 1e-4) == 4

    def test_infeasible_correlation(self):
        assert required_samples(4, 0.7, 0.1, 0.5, 1e-4) is None

    def test_loose_tolerance_needs_one_sample(self):
        assert required_samples(4, 0.7, 0.1, 0.0, 0.9) == 1
        assert required_samples(2, 0.8, 0.3, 0.2, 0.9) == 1

    def test_threshold_must_exceed_mean(self):
        with pytest.raises(InfeasibleThresholdError):
            required_samples(4, 0.5, 0.5, 0.0, 1e-4)

    def test_round_trip_meets_tolerance(self):
        # The returned M, pushed back through the effective sample size and
        # the bound, must certify the tolerance it was solved for.
        grid = [
            (k, tau, mu, rho, eps)
            for k in (1, 2, 4, 8)
            for tau, mu in [(0.7, 0.1), (0.8, 0.3), (0.6, 0.25)]
            for rho in (0.0, 0.05, 0.2, 0.4)
            for eps in (1e-2, 1e-4, 1e-6)
        ]
        checked = 0
        for k, tau, mu, rho, eps in grid:
            m = required_samples(k, tau, mu, rho, eps)
            if m is None:
                continue
            bound = hoeffding_bound(effective_sample_size(k, m, rho), tau, mu)
            assert bound <= eps * (1 + 1e-9)
            if m > 1:
                # minimality: one fewer sample must miss the tolerance
                short = hoeffding_bound(effective_sample_size(k, m - 1, rho), tau, mu)
                assert short > eps
            checked += 1
        assert checked > 20


class TestEstimateFailure:
    def test_all_routes_present(self):
        params = RiskParameters.homogeneous(2, 3, 0.3, 0.3, 0.6)
        estimate = estimate_failure(params, trials=5_000, seed=1)
        assert isinstance(estimate, FailureEstimate)
        assert estimate.exact is not None
        assert 0.0 <= estimate.hoeffding <= 1.0
        assert estimate.monte_carlo is not None
        assert estimate.total_samples == 6
        assert estimate.effective_samples <= 6

    def test_exact_absent_beyond_ceiling(self):
        params = RiskParameters.homogeneous(4, 100, 0.1, 0.0, 0.7)
        estimate = estimate_failure(params)
        assert estimate.exact is None
        assert estimate.monte_carlo is None

    def test_vacuous_hoeffding_when_mean_exceeds_threshold(self):
        params = RiskParameters.homogeneous(2, 2, 0.9, 0.0, 0.5)
        estimate = estimate_failure(params)
        assert estimate.hoeffding == 1.0


class TestParameterTypes:
    def test_profile_validation(self):
        with pytest.raises(ValueError):
            ModelErrorProfile(mu=0.0, rho=0.1, samples=2)
        with pytest.raises(ValueError):
            ModelErrorProfile(mu=0.5, rho=-0.1, samples=2)
        with pytest.raises(ValueError):
            ModelErrorProfile(mu=0.5, rho=0.1, samples=0)

    def test_rho_clamped_below_one(self):
        profile = ModelErrorProfile(mu=0.5, rho=1.0, samples=2)
        assert profile.rho < 1.0

    def test_parameters_validation(self):
        profile = ModelErrorProfile(mu=0.1, rho=0.0, samples=2)
        with pytest.raises(ValueError):
            RiskParameters(profiles=(), tau=0.7)
        with pytest.raises(ValueError):
            RiskParameters(profiles=(profile,), tau=0.4)
        with pytest.raises(ValueError):
            RiskParameters(profiles=(profile,), tau=0.7, epsilon=0.0)

    def test_weighted_means(self):
        params = RiskParameters(
            profiles=(
                ModelErrorProfile(mu=0.1, rho=0.0, samples=3),
                ModelErrorProfile(mu=0.4, rho=0.6, samples=1),
            ),
            tau=0.7,
        )
        assert params.total_samples == 4
        assert params.mu_bar == pytest.approx((0.1 * 3 + 0.4) / 4)
        assert params.rho_bar == pytest.approx(0.6 / 4)
