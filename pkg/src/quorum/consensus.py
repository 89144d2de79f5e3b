"""Consensus selection over a pool of candidate generations.

A pool's candidates are scored pairwise with a hybrid utility (a convex mix
of embedding cosine and ROUGE-L), each candidate gets the mean utility to
the rest of the pool as its consensus score, and the top scorer is selected
if it clears the consensus threshold; otherwise the pool is an abstention.
Abstaining is a normal verdict, not an error, and is carried through all
downstream records. The module also aggregates per-model divergence
statistics across many pools for operational monitoring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import Embedder, EmbeddingVector, cosine
from .textsim import rouge_l, tokenize


class PoolTooSmallError(ValueError):
    """Raised for pools with fewer than two candidates.

    A single sample has no peers to agree with, so its consensus score is
    undefined; letting it through would silently bypass the consensus gate.
    """


@dataclass(frozen=True)
class Candidate:
    """One generated text with its provenance inside a pool."""

    text: str
    model_id: str
    temperature: float
    index: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")


@dataclass(frozen=True)
class CandidatePool:
    """An ordered ensemble of candidates answering one prompt."""

    prompt_id: str
    candidates: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("pool must contain at least one candidate")
        for position, candidate in enumerate(self.candidates):
            if candidate.index != position:
                raise ValueError(
                    f"candidate indices must be 0..N-1 in order; "
                    f"position {position} holds index {candidate.index}"
                )

    @property
    def size(self) -> int:
        return len(self.candidates)

    @staticmethod
    def from_texts(
        prompt_id: str,
        entries: list[tuple[str, str, float]],
    ) -> "CandidatePool":
        """Build a pool from (text, model_id, temperature) tuples."""
        candidates = tuple(
            Candidate(text=text, model_id=model_id, temperature=temperature, index=i)
            for i, (text, model_id, temperature) in enumerate(entries)
        )
        return CandidatePool(prompt_id=prompt_id, candidates=candidates)


@dataclass(frozen=True)
class UtilityMatrix:
    """Pairwise hybrid utilities for one pool.

    The diagonal is stored as zero and excluded from all consensus scores;
    off-diagonal entries are in [0, 1] and the matrix is symmetric by
    construction (each unordered pair is computed once).
    """

    values: np.ndarray
    alpha: float


@dataclass(frozen=True)
class ConsensusResult:
    """Outcome of selection on one pool: a winner or an abstention."""

    prompt_id: str
    selected_index: int | None
    scores: tuple[float, ...]
    tau: float
    alpha: float

    @property
    def abstained(self) -> bool:
        return self.selected_index is None

    @property
    def winner_score(self) -> float | None:
        if self.selected_index is None:
            return None
        return self.scores[self.selected_index]


@dataclass(frozen=True)
class ModelDivergence:
    """Aggregated divergence statistics for one model across pools.

    ``mean_divergence`` is the mean of (1 - S_i) over the model's
    candidates. ``mu_hat`` estimates the model's operational error rate as
    the fraction of its candidates scoring below the consensus threshold.
    ``rho_hat`` estimates how strongly the model's samples within one pool
    fail together: the Pearson correlation of the below-threshold indicator
    over all ordered within-pool pairs, clamped to [0, 1]. It is None when
    the model never contributes two samples to the same pool, and 0.0 when
    the indicator never varies (constant data carries no co-movement
    evidence).
    """

    model_id: str
    mean_divergence: float
    sample_count: int
    mu_hat: float
    rho_hat: float | None


@dataclass(frozen=True)
class DivergenceReport:
    """Per-model divergence summary over a batch of scored pools."""

    models: dict[str, ModelDivergence] = field(default_factory=dict)


def hybrid_utility(
    candidate_i: Candidate,
    candidate_j: Candidate,
    alpha: float,
    embeddings: dict[int, EmbeddingVector],
) -> float:
    """Mix of semantic and lexical agreement between two distinct candidates.

    Computes alpha * semantic + (1 - alpha) * lexical, where the semantic
    term is the embedding cosine clamped to [0, 1] (thresholds assume
    nonnegative utilities) and the lexical term is ROUGE-L F1.
    """
    if candidate_i.index == candidate_j.index:
        raise ValueError("hybrid utility is defined for distinct candidates only")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    try:
        u = embeddings[candidate_i.index]
        v = embeddings[candidate_j.index]
    except KeyError as exc:
        raise ValueError(f"missing embedding for candidate index {exc.args[0]}") from None
    semantic = min(1.0, max(0.0, cosine(u, v)))
    lexical = rouge_l(tokenize(candidate_i.text), tokenize(candidate_j.text))
    return alpha * semantic + (1.0 - alpha) * lexical


def build_utility_matrix(pool: CandidatePool, alpha: float, embedder: Embedder) -> UtilityMatrix:
    """Pairwise utility matrix for a pool (symmetric, zero diagonal).

    Embeddings are fetched first in a single batch, then each unordered
    pair is scored once and mirrored.
    """
    n = pool.size
    if n < 2:
        raise PoolTooSmallError(f"need at least 2 candidates, got {n}")
    texts = [c.text for c in pool.candidates]
    vectors = embedder.embed_batch(texts)
    embeddings = {c.index: v for c, v in zip(pool.candidates, vectors)}
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            u = hybrid_utility(pool.candidates[i], pool.candidates[j], alpha, embeddings)
            values[i, j] = u
            values[j, i] = u
    return UtilityMatrix(values=values, alpha=alpha)


def consensus_scores(matrix: UtilityMatrix) -> tuple[float, ...]:
    """Per-candidate mean utility to the rest of the pool.

    Row sums use exact (correctly rounded) summation so that candidates
    with identical utility profiles, such as duplicate texts, tie exactly
    and the lowest-index rule stays deterministic.
    """
    n = matrix.values.shape[0]
    if n < 2:
        raise PoolTooSmallError(f"need at least 2 candidates, got {n}")
    return tuple(math.fsum(matrix.values[i]) / (n - 1) for i in range(n))


def select(
    pool: CandidatePool,
    alpha: float,
    tau: float,
    embedder: Embedder,
) -> ConsensusResult:
    """Pick the consensus centroid of a pool, or abstain.

    The candidate with the highest consensus score wins when that score
    reaches ``tau``; ties break to the lowest index. Below ``tau`` the
    result is an abstention.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    matrix = build_utility_matrix(pool, alpha, embedder)
    scores = consensus_scores(matrix)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    selected = best if scores[best] >= tau else None
    return ConsensusResult(
        prompt_id=pool.prompt_id,
        selected_index=selected,
        scores=scores,
        tau=tau,
        alpha=alpha,
    )


def _pearson_clamped(xs: list[float], ys: list[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    sx = x.std()
    sy = y.std()
    if sx < 1e-12 or sy < 1e-12:
        return 0.0
    r = float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))
    return min(1.0, max(0.0, r))


def divergence_report(
    results: list[tuple[CandidatePool, ConsensusResult]],
) -> DivergenceReport:
    """Aggregate per-model divergence statistics across scored pools.

    Each pool/result pair contributes one (1 - S_i) observation and one
    below-threshold indicator per candidate, attributed to the candidate's
    model. Indicators use each result's own threshold.
    """
    if not results:
        raise ValueError("divergence report needs at least one scored pool")
    divergences: dict[str, list[float]] = {}
    indicators: dict[str, list[float]] = {}
    pool_indicators: dict[str, list[list[float]]] = {}
    for pool, result in results:
        if len(result.scores) != pool.size:
            raise ValueError(
                f"pool {pool.prompt_id!r}: {pool.size} candidates but "
                f"{len(result.scores)} scores"
            )
        per_pool: dict[str, list[float]] = {}
        for candidate, score in zip(pool.candidates, result.scores):
            diverged = 1.0 if score < result.tau else 0.0
            divergences.setdefault(candidate.model_id, []).append(1.0 - score)
            indicators.setdefault(candidate.model_id, []).append(diverged)
            per_pool.setdefault(candidate.model_id, []).append(diverged)
        for model_id, flags in per_pool.items():
            pool_indicators.setdefault(model_id, []).append(flags)

    models: dict[str, ModelDivergence] = {}
    for model_id in sorted(divergences):
        xs: list[float] = []
        ys: list[float] = []
        for flags in pool_indicators[model_id]:
            if len(flags) < 2:
                continue
            for a in range(len(flags)):
                for b in range(len(flags)):
                    if a != b:
                        xs.append(flags[a])
                        ys.append(flags[b])
        rho_hat = _pearson_clamped(xs, ys) if xs else None
        samples = indicators[model_id]
        models[model_id] = ModelDivergence(
            model_id=model_id,
            mean_divergence=math.fsum(divergences[model_id]) / len(samples),
            sample_count=len(samples),
            mu_hat=math.fsum(samples) / len(samples),
            rho_hat=rho_hat,
        )
    return DivergenceReport(models=models)
