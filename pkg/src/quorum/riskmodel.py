"""Failure-probability machinery for correlated ensembles.

Repeated samples from one model tend to fail together. That dependency is
modeled hierarchically: each model draws a latent error rate pi_k from a
Beta distribution, then its M_k samples fail as Binomial(M_k, pi_k) draws.
The Beta shape is parameterized by the model's mean error rate mu and
intra-model correlation rho via a = mu * (1/rho - 1), b = (1 - mu) *
(1/rho - 1), which makes the marginal divergent-count distribution
Beta-Binomial with exactly those moments.

The ensemble fails when the total divergent count across models reaches a
super-majority fraction tau of all N samples. This module computes that
failure probability three ways: exactly (convolving per-model marginals
over the total count), by seeded Monte Carlo over the latent hierarchy
(an independent validator), and through a conservative Hoeffding-style
bound on the correlation-adjusted effective sample size. The bound also
inverts into the smallest per-model sample count meeting a target
tolerance.

All probability arithmetic runs in log space (log-gamma for Beta
functions, log-sum-exp for tails); the probabilities of interest sit
around 1e-8, where naive products lose precision.
"""

from __future__ import annotations

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

#: Below this correlation the Beta mixing distribution is degenerate at mu
#: and the marginal is treated as the analytic Binomial(M, mu) limit.
RHO_BINOMIAL_LIMIT = 1e-12

#: The Beta parameterization degenerates at rho = 1 (all-or-nothing per
#: model); correlations are clamped just below it.
RHO_MAX = 1.0 - 1e-9

#: Largest total sample count enumerated exactly by default.
DEFAULT_ENUMERATION_CEILING = 256


class EnumerationCeilingError(ValueError):
    """Exact enumeration was asked for more samples than the ceiling allows."""


class InfeasibleThresholdError(ValueError):
    """The consensus threshold does not exceed the mean error rate.

    The concentration bound is vacuous at tau <= mu_bar: no number of
    samples can certify the tolerance.
    """


def _clamp_rho(rho: float) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    return min(rho, RHO_MAX)


@dataclass(frozen=True)
class ModelErrorProfile:
    """Error behavior of one model: mean rate, self-correlation, sample count."""

    mu: float
    rho: float
    samples: int

    def __post_init__(self) -> None:
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must be in (0, 1), got {self.mu}")
        object.__setattr__(self, "rho", _clamp_rho(self.rho))
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")


@dataclass(frozen=True)
class RiskParameters:
    """Ensemble composition plus the consensus threshold and tolerance."""

    profiles: tuple[ModelErrorProfile, ...]
    tau: float
    epsilon: float = 1e-4

    def __post_init__(self) -> None:
        if not self.profiles:
            raise ValueError("at least one model profile is required")
        if not 0.5 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0.5, 1], got {self.tau}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")

    @property
    def total_samples(self) -> int:
        return sum(p.samples for p in self.profiles)

    @property
    def mu_bar(self) -> float:
        """Sample-weighted mean error rate across models."""
        return sum(p.mu * p.samples for p in self.profiles) / self.total_samples

    @property
    def rho_bar(self) -> float:
        """Sample-weighted mean intra-model correlation across models."""
        return sum(p.rho * p.samples for p in self.profiles) / self.total_samples

    @staticmethod
    def homogeneous(
        k: int, m: int, mu: float, rho: float, tau: float, epsilon: float = 1e-4
    ) -> "RiskParameters":
        """K identical models with M samples each."""
        profile = ModelErrorProfile(mu=mu, rho=rho, samples=m)
        return RiskParameters(profiles=(profile,) * k, tau=tau, epsilon=epsilon)


@dataclass(frozen=True)
class FailureEstimate:
    """Failure probability of one configuration, by every available route."""

    exact: float | None
    hoeffding: float
    monte_carlo: tuple[float, float] | None
    total_samples: int
    effective_samples: float


def divergent_count_threshold(tau: float, total: int) -> int:
    """Smallest integer count whose fraction of ``total`` reaches ``tau``.

    The failure region uses a weak inequality, so when tau * total lands
    exactly on an integer that count itself is already a failure.
    """
    return max(0, math.ceil(tau * total - 1e-9))


def _log_pmf_vector(m: int, mu: float, rho: float) -> np.ndarray:
    """Log-pmf of the divergent count over 0..M for one model.

    The Beta-function ratio is evaluated as rising factorials,
    (a)_z (b)_{M-z} / (a+b)_M, summed in log space. Unlike a betaln
    difference this stays accurate when the concentration a+b is huge
    (rho near 0), where log-gamma differences cancel catastrophically.
    """
    z = np.arange(m + 1)
    log_comb = special.gammaln(m + 1) - special.gammaln(z + 1) - special.gammaln(m - z + 1)
    if rho < RHO_BINOMIAL_LIMIT:
        return log_comb + z * math.log(mu) + (m - z) * math.log1p(-mu)
    concentration = 1.0 / rho - 1.0
    a = mu * concentration
    b = (1.0 - mu) * concentration
    steps = np.arange(m, dtype=np.float64)
    rising_a = np.concatenate(([0.0], np.cumsum(np.log(a + steps))))
    rising_b = np.concatenate(([0.0], np.cumsum(np.log(b + steps))))
    rising_ab = np.sum(np.log(a + b + steps))
    return log_comb + rising_a[z] + rising_b[m - z] - rising_ab


def beta_binomial_pmf(z: int, m: int, mu: float, rho: float) -> float:
    """P(divergent count = z) for one model's M samples.

    Beta-Binomial with mean error rate ``mu`` and intra-model correlation
    ``rho``, evaluated through log-gamma; collapses to the Binomial(M, mu)
    pmf in the rho -> 0 limit.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0 <= z <= m:
        raise ValueError(f"z must be in [0, {m}], got {z}")
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mu must be in (0, 1), got {mu}")
    rho = _clamp_rho(rho)
    return float(np.exp(_log_pmf_vector(m, mu, rho)[z]))


def _log_convolve(log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """Log-space convolution of two log-pmf vectors over integer support."""
    n_p, n_q = len(log_p), len(log_q)
    stacked = np.full((n_q, n_p + n_q - 1), -np.inf)
    for shift in range(n_q):
        stacked[shift, shift : shift + n_p] = log_p + log_q[shift]
    return special.logsumexp(stacked, axis=0)


def total_count_distribution(params: RiskParameters) -> np.ndarray:
    """Log-pmf of the total divergent count across all models (0..N)."""
    log_total = np.array([0.0])
    for profile in params.profiles:
        log_total = _log_convolve(log_total, _log_pmf_vector(profile.samples, profile.mu, profile.rho))
    return log_total


def failure_probability_exact(
    params: RiskParameters,
    enumeration_ceiling: int = DEFAULT_ENUMERATION_CEILING,
) -> float:
    """Exact probability that divergent samples reach a tau super-majority.

    The failure region depends only on the total divergent count, so the
    per-model Beta-Binomial marginals are convolved into the total-count
    distribution (O(K * M * N) instead of the exponential product over all
    count vectors) and the mass at counts >= ceil(tau * N) is summed.
    """
    n = params.total_samples
    if n > enumeration_ceiling:
        raise EnumerationCeilingError(
            f"exact enumeration supports up to {enumeration_ceiling} total samples, "
            f"got {n}; use the Monte Carlo estimator"
        )
    log_total = total_count_distribution(params)
    threshold = divergent_count_threshold(params.tau, n)
    if threshold > n:
        return 0.0
    return float(np.exp(special.logsumexp(log_total[threshold:])))


def failure_probability_mc(
    params: RiskParameters,
    trials: int,
    seed: int,
    chunk_size: int = 1_000_000,
) -> tuple[float, float]:
    """Monte Carlo estimate of the failure probability, with standard error.

    Each trial draws a latent error rate pi_k per model from its Beta
    distribution and a Binomial(M_k, pi_k) divergent count, then checks
    whether the total reaches the threshold. Sampling uses numpy's PCG64
    generator, so a fixed seed reproduces the estimate bit-for-bit across
    platforms. ``chunk_size`` only caps memory, but it decides which
    stream draws land in which trial, so reproducibility is per
    (seed, chunk_size) pair. Returns (failure frequency, binomial
    standard error).
    """
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = params.total_samples
    threshold = divergent_count_threshold(params.tau, n)
    failures = 0
    remaining = trials
    while remaining > 0:
        size = min(chunk_size, remaining)
        total = np.zeros(size, dtype=np.int64)
        for profile in params.profiles:
            if profile.rho < RHO_BINOMIAL_LIMIT:
                total += rng.binomial(profile.samples, profile.mu, size=size)
            else:
                concentration = 1.0 / profile.rho - 1.0
                rates = rng.beta(
                    profile.mu * concentration,
                    (1.0 - profile.mu) * concentration,
                    size=size,
                )
                total += rng.binomial(profile.samples, rates)
        failures += int(np.count_nonzero(total >= threshold))
        remaining -= size
    estimate = failures / trials
    stderr = math.sqrt(estimate * (1.0 - estimate) / trials)
    return estimate, stderr


def effective_sample_size(k: int, m: float, rho_bar: float) -> float:
    """Correlation-adjusted count of independent samples: K*M / (1 + (M-1)*rho).

    Equals K*M under independence, collapses to K as rho -> 1, and
    saturates at K / rho as M grows, which is why adding models beats
    adding samples once correlation bites.
    """
    if k < 1 or m < 1:
        raise ValueError(f"k and m must be >= 1, got k={k}, m={m}")
    if not 0.0 <= rho_bar <= 1.0:
        raise ValueError(f"rho_bar must be in [0, 1], got {rho_bar}")
    return k * m / (1.0 + (m - 1.0) * rho_bar)


def hoeffding_bound(n_eff: float, tau: float, mu_bar: float) -> float:
    """Concentration bound exp(-2 * N_eff * (tau - mu_bar)^2), clamped to [0, 1].

    Bounds the probability that the observed divergence fraction reaches
    ``tau`` when the mean rate is ``mu_bar``. Requires tau > mu_bar; at or
    below the mean the bound is vacuous and the call is rejected.
    """
    if n_eff < 0:
        raise ValueError(f"n_eff must be >= 0, got {n_eff}")
    if tau <= mu_bar:
        raise InfeasibleThresholdError(
            f"tau ({tau}) must exceed the mean error rate ({mu_bar})"
        )
    return min(1.0, math.exp(-2.0 * n_eff * (tau - mu_bar) ** 2))


def required_samples(
    k: int,
    tau: float,
    mu_bar: float,
    rho_bar: float,
    epsilon: float,
) -> int | None:
    """Smallest per-model sample count M whose Hoeffding bound meets epsilon.

    Solves exp(-2 * N_eff(K, M, rho_bar) * (tau - mu_bar)^2) <= epsilon for
    integer M >= 1:

        M >= ln(1/eps) * (1 - rho_bar) / (2K (tau - mu_bar)^2 - rho_bar * ln(1/eps))

    Returns None when the denominator is not positive: correlation consumes
    the entire budget and no finite M suffices, so the ensemble needs more
    models (larger K) or less correlation, not more samples.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0.0 <= rho_bar <= 1.0:
        raise ValueError(f"rho_bar must be in [0, 1], got {rho_bar}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if tau <= mu_bar:
        raise InfeasibleThresholdError(
            f"tau ({tau}) must exceed the mean error rate ({mu_bar})"
        )
    log_inv_eps = math.log(1.0 / epsilon)
    denominator = 2.0 * k * (tau - mu_bar) ** 2 - rho_bar * log_inv_eps
    if denominator <= 0.0:
        return None
    bound = log_inv_eps * (1.0 - rho_bar) / denominator
    return max(1, math.ceil(bound - 1e-12))


def estimate_failure(
    params: RiskParameters,
    trials: int | None = None,
    seed: int = 0,
    enumeration_ceiling: int = DEFAULT_ENUMERATION_CEILING,
) -> FailureEstimate:
    """Evaluate one configuration by exact, Hoeffding, and (optional) MC routes.

    ``exact`` is None beyond the enumeration ceiling; ``monte_carlo`` is
    None unless a trial count is given. The Hoeffding route uses the
    sample-weighted mean error rate and correlation; when the threshold
    does not exceed the mean rate it reports the vacuous bound 1.0.
    """
    n = params.total_samples
    k = len(params.profiles)
    n_eff = effective_sample_size(k, n / k, params.rho_bar)
    try:
        exact: float | None = failure_probability_exact(params, enumeration_ceiling)
    except EnumerationCeilingError:
        exact = None
    try:
        hoeffding = hoeffding_bound(n_eff, params.tau, params.mu_bar)
    except InfeasibleThresholdError:
        hoeffding = 1.0
    monte_carlo = None
    if trials is not None:
        monte_carlo = failure_probability_mc(params, trials, seed)
    return FailureEstimate(
        exact=exact,
        hoeffding=hoeffding,
        monte_carlo=monte_carlo,
        total_samples=n,
        effective_samples=n_eff,
    )
