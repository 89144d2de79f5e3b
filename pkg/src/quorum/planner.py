"""Ensemble design: pick the cheapest model subset and sample count that
meet a failure tolerance, and sweep the cost/risk frontier.

The search is exhaustive over model subsets (up to a size limit) and the
shared per-model sample count M (up to a count limit). Realistic catalogs
hold a handful of models, so exactness is affordable and beats a
heuristic. Each configuration's failure probability comes from the exact
enumeration when the total sample count fits the ceiling, otherwise from
the Hoeffding bound on the effective sample size; every plan records which
route certified it, because the bound is conservative at independence but
only approximate under correlation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

from .riskmodel import (
    DEFAULT_ENUMERATION_CEILING,
    ModelErrorProfile,
    RiskParameters,
    effective_sample_size,
    failure_probability_exact,
    hoeffding_bound,
)


class InfeasiblePlanError(Exception):
    """No configuration within the search limits meets the tolerance."""

    def __init__(self, message: str, best_p_fail: float | None = None):
        super().__init__(message)
        self.best_p_fail = best_p_fail


@dataclass(frozen=True)
class ModelCatalogEntry:
    """One model available to the planner: cost, error behavior, temperatures.

    Cost units are abstract and caller-supplied; the optimization only
    compares them. The temperature ladder lists the distinct sampling
    temperatures this model cycles through.
    """

    model_id: str
    cost_per_call: float
    mu: float
    rho: float
    ladder: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75)

    def __post_init__(self) -> None:
        if self.cost_per_call < 0:
            raise ValueError(f"cost_per_call must be >= 0, got {self.cost_per_call}")
        if not 0.0 < self.mu < 1.0:
            raise ValueError(f"mu must be in (0, 1), got {self.mu}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if not self.ladder:
            raise ValueError("temperature ladder must be nonempty")
        if len(set(self.ladder)) != len(self.ladder):
            raise ValueError("temperature ladder values must be distinct")
        for t in self.ladder:
            if not 0.0 <= t <= 2.0:
                raise ValueError(f"ladder temperatures must be in [0, 2], got {t}")


@dataclass(frozen=True)
class EnsemblePlan:
    """A chosen model subset with a shared per-model sample count."""

    models: tuple[ModelCatalogEntry, ...]
    samples_per_model: int
    predicted_p_fail: float
    bound_source: str  # "exact" or "hoeffding"
    total_cost: float
    tau: float
    epsilon: float | None = None

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(entry.model_id for entry in self.models)

    @property
    def total_samples(self) -> int:
        return len(self.models) * self.samples_per_model

    @property
    def temperatures(self) -> dict[str, tuple[float, ...]]:
        """Temperature per sample for each model: the ladder, cycled evenly.

        When the sample count equals the ladder length each model emits
        exactly one sample per ladder value.
        """
        return {
            entry.model_id: tuple(
                entry.ladder[i % len(entry.ladder)] for i in range(self.samples_per_model)
            )
            for entry in self.models
        }


def _evaluate(
    subset: tuple[ModelCatalogEntry, ...],
    m: int,
    tau: float,
    enumeration_ceiling: int,
) -> tuple[float, str] | None:
    """Failure probability of (subset, M), or None when tau <= subset mean mu."""
    mu_bar = sum(e.mu for e in subset) / len(subset)
    if tau <= mu_bar:
        return None
    total = len(subset) * m
    if total <= enumeration_ceiling:
        params = RiskParameters(
            profiles=tuple(ModelErrorProfile(mu=e.mu, rho=e.rho, samples=m) for e in subset),
            tau=tau,
        )
        return failure_probability_exact(params, enumeration_ceiling), "exact"
    rho_bar = sum(e.rho for e in subset) / len(subset)
    n_eff = effective_sample_size(len(subset), m, rho_bar)
    return hoeffding_bound(n_eff, tau, mu_bar), "hoeffding"


def _configurations(
    catalog: list[ModelCatalogEntry],
    tau: float,
    max_models: int,
    max_samples: int,
    enumeration_ceiling: int,
) -> list[tuple[float, int, tuple[str, ...], EnsemblePlan]]:
    """All evaluated (cost, N, ids, plan) tuples, in deterministic order."""
    ordered = sorted(catalog, key=lambda e: e.model_id)
    out = []
    for k in range(1, min(max_models, len(ordered)) + 1):
        for subset in itertools.combinations(ordered, k):
            subset_cost = sum(e.cost_per_call for e in subset)
            for m in range(1, max_samples + 1):
                evaluated = _evaluate(subset, m, tau, enumeration_ceiling)
                if evaluated is None:
                    continue
                p_fail, source = evaluated
                plan_candidate = EnsemblePlan(
                    models=subset,
                    samples_per_model=m,
                    predicted_p_fail=p_fail,
                    bound_source=source,
                    total_cost=subset_cost * m,
                    tau=tau,
                )
                out.append(
                    (subset_cost * m, k * m, tuple(e.model_id for e in subset), plan_candidate)
                )
    return out


def plan(
    catalog: list[ModelCatalogEntry],
    tau: float,
    epsilon: float,
    max_models: int | None = None,
    max_samples: int = 8,
    enumeration_ceiling: int = DEFAULT_ENUMERATION_CEILING,
) -> EnsemblePlan:
    """Minimum-cost configuration whose failure probability meets epsilon.

    Searches every subset of the catalog up to ``max_models`` models and
    every shared sample count up to ``max_samples``. Cost ties break to the
    smaller total sample count, then to the lexicographically smallest
    model-id tuple. Subsets whose mean error rate reaches tau are
    infeasible outright. Raises :class:`InfeasiblePlanError` when nothing
    within the limits meets the tolerance.
    """
    if not catalog:
        raise ValueError("catalog must be nonempty")
    if not 0.5 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0.5, 1], got {tau}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if max_models is None:
        max_models = len(catalog)
    best_key: tuple[float, int, tuple[str, ...]] | None = None
    best_plan: EnsemblePlan | None = None
    best_infeasible_p: float | None = None
    for cost, n, ids, candidate in _configurations(
        catalog, tau, max_models, max_samples, enumeration_ceiling
    ):
        if candidate.predicted_p_fail > epsilon:
            if best_infeasible_p is None or candidate.predicted_p_fail < best_infeasible_p:
                best_infeasible_p = candidate.predicted_p_fail
            continue
        key = (cost, n, ids)
        if best_key is None or key < best_key:
            best_key = key
            best_plan = candidate
    if best_plan is None:
        achieved = (
            f"; best achievable P_fail within limits is {best_infeasible_p:.3g}"
            if best_infeasible_p is not None
            else ""
        )
        raise InfeasiblePlanError(
            f"no configuration with up to {max_models} models and {max_samples} "
            f"samples per model meets epsilon={epsilon:g} at tau={tau:g}{achieved}",
            best_p_fail=best_infeasible_p,
        )
    return replace(best_plan, epsilon=epsilon)


@dataclass(frozen=True)
class FrontierPoint:
    """Best achievable failure probability at one spend level."""

    budget: float
    p_fail: float
    plan: EnsemblePlan | None


def pareto_frontier(
    catalog: list[ModelCatalogEntry],
    tau: float,
    budgets: list[float],
    max_models: int | None = None,
    max_samples: int = 8,
    enumeration_ceiling: int = DEFAULT_ENUMERATION_CEILING,
) -> list[FrontierPoint]:
    """Minimum failure probability attainable within each budget.

    Budgets with no affordable configuration report a failure probability
    of 1.0 and no plan.'Best' at each budget means the lowest failure
    probability, with ties broken toward lower cost, then fewer samples,
    then model ids, so the output is deterministic. The achievable
    probability is non-increasing in the budget.
    """
    if not catalog:
        raise ValueError("catalog must be nonempty")
    if not budgets:
        raise ValueError("budget grid must be nonempty")
    if max_models is None:
        max_models = len(catalog)
    configs = _configurations(catalog, tau, max_models, max_samples, enumeration_ceiling)
    points: list[FrontierPoint] = []
    for budget in budgets:
        affordable = [
            (candidate.predicted_p_fail, cost, n, ids, candidate)
            for cost, n, ids, candidate in configs
            if cost <= budget
        ]
        if not affordable:
            points.append(FrontierPoint(budget=budget, p_fail=1.0, plan=None))
            continue
        p_fail, _, _, _, chosen = min(affordable, key=lambda row: row[:4])
        points.append(FrontierPoint(budget=budget, p_fail=p_fail, plan=chosen))
    return points
