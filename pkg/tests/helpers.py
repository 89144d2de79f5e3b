"""Shared test oracles and synthetic pool generators.

The brute-force selector here recomputes expected utilities from raw texts
with its own LCS implementation and its own score loop, independently of
the production matrix path, so agreement between the two is meaningful.
"""

from __future__ import annotations

import functools
import math
import random

import numpy as np

import itertools

from quorum.consensus import CandidatePool
from quorum.embedding import Embedder
from quorum.riskmodel import (
    ModelErrorProfile,
    RiskParameters,
    effective_sample_size,
    failure_probability_exact,
    hoeffding_bound,
)


def make_pool(texts: list[str], prompt_id: str = "p", model_ids: list[str] | None = None,
              temperatures: list[float] | None = None) -> CandidatePool:
    n = len(texts)
    model_ids = model_ids or [f"m{i}" for i in range(n)]
    temperatures = temperatures or [0.0] * n
    return CandidatePool.from_texts(
        prompt_id, list(zip(texts, model_ids, temperatures))
    )


def _recursive_lcs(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    @functools.lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))

    return go(0, 0)


def brute_force_select(
    pool: CandidatePool, alpha: float, embedder: Embedder
) -> tuple[int, list[float]]:
    """Expected-utility maximizer recomputed from raw texts.

    Returns (winning index under the lowest-index tie rule, scores).
    """
    texts = [c.text for c in pool.candidates]
    vectors = embedder.embed_batch(texts)
    token_lists = [tuple(t.casefold().split()) for t in texts]

    def utility(i: int, j: int) -> float:
        semantic = float(np.dot(vectors[i].values, vectors[j].values))
        semantic = max(0.0, min(1.0, semantic))
        ta, tb = token_lists[i], token_lists[j]
        lexical = 0.0
        if ta and tb:
            lcs = _recursive_lcs(ta, tb)
            if lcs:
                precision = lcs / len(tb)
                recall = lcs / len(ta)
                lexical = 2.0 * precision * recall / (precision + recall)
        return alpha * semantic + (1.0 - alpha) * lexical

    n = len(texts)
    scores = [
        math.fsum(utility(i, j) for j in range(n) if j != i) / (n - 1) for i in range(n)
    ]
    best = 0
    for i in range(1, n):
        if scores[i] > scores[best]:
            best = i
    return best, scores


def random_pool(rng: random.Random, max_size: int = 8) -> CandidatePool:
    """Random small pool over a tiny vocabulary; duplicates are common."""
    vocab = ["law", "clause", "void", "binding", "party", "shall", "not", "within", "days", "act"]
    n = rng.randint(2, max_size)
    texts: list[str] = []
    for _ in range(n):
        if texts and rng.random() < 0.35:
            texts.append(rng.choice(texts))  # force exact duplicates / ties
        else:
            length = rng.randint(1, 6)
            texts.append(" ".join(rng.choice(vocab) for _ in range(length)))
    return make_pool(texts)


def brute_force_plan_optimum(catalog, tau, epsilon, max_models, max_samples, ceiling=256):
    """Independent exhaustive planner search mirroring the feasibility contract.

    Returns ((cost, total samples, model ids), p_fail) of the optimum, or
    None when nothing is feasible.
    """
    best = None
    for k in range(1, min(max_models, len(catalog)) + 1):
        for subset in itertools.combinations(sorted(catalog, key=lambda e: e.model_id), k):
            mu_bar = sum(e.mu for e in subset) / k
            if tau <= mu_bar:
                continue
            for m in range(1, max_samples + 1):
                if k * m <= ceiling:
                    params = RiskParameters(
                        profiles=tuple(
                            ModelErrorProfile(mu=e.mu, rho=e.rho, samples=m) for e in subset
                        ),
                        tau=tau,
                    )
                    p = failure_probability_exact(params, ceiling)
                else:
                    rho_bar = sum(e.rho for e in subset) / k
                    p = hoeffding_bound(effective_sample_size(k, m, rho_bar), tau, mu_bar)
                if p > epsilon:
                    continue
                cost = sum(e.cost_per_call for e in subset) * m
                key = (cost, k * m, tuple(e.model_id for e in subset))
                if best is None or key < best[0]:
                    best = (key, p)
    return best


NONSENSE_VOCAB = [f"zz{i:03d}" for i in range(400)]
CLUSTER_CORE = ["the", "statute", "requires", "annual", "disclosure", "of", "processing", "records"]
CLUSTER_ALTERNATES = ["all", "such", "relevant", "internal"]


def clustered_pool(
    rng: random.Random, n: int, n_correct: int, prompt_id: str = "p"
) -> tuple[CandidatePool, set[int]]:
    """Pool with a tight correct cluster and scattered singleton outliers.

    Correct candidates share a long token core with one small perturbation
    each; every outlier draws its tokens from a disjoint nonsense
    vocabulary, disjoint from the other outliers as well. Returns the pool
    and the set of correct indices.
    """
    assert n_correct <= n
    texts: list[str] = []
    for _ in range(n_correct):
        tokens = list(CLUSTER_CORE)
        slot = rng.randrange(len(tokens))
        if rng.random() < 0.5:
            tokens[slot] = rng.choice(CLUSTER_ALTERNATES)
        else:
            tokens.pop(slot)
        texts.append(" ".join(tokens))
    available = list(NONSENSE_VOCAB)
    rng.shuffle(available)
    for _ in range(n - n_correct):
        length = rng.randint(4, 7)
        tokens = [available.pop() for _ in range(length)]
        texts.append(" ".join(tokens))
    order = list(range(n))
    rng.shuffle(order)
    shuffled = [texts[i] for i in order]
    correct_positions = {pos for pos, original in enumerate(order) if original < n_correct}
    return make_pool(shuffled, prompt_id=prompt_id), correct_positions
