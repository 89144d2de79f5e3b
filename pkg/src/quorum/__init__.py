"""Reference-free consensus selection over LLM ensembles.

Generate candidates across heterogeneous models and temperatures, score
every pair with a hybrid of embedding cosine and ROUGE-L, select the
candidate with the highest mean agreement when it clears a consensus
threshold (abstain otherwise), and size the ensemble so the probability of
a confidently-selected failure stays below a chosen tolerance.
"""

from .consensus import (
    Candidate,
    CandidatePool,
    ConsensusResult,
    DivergenceReport,
    ModelDivergence,
    PoolTooSmallError,
    UtilityMatrix,
    build_utility_matrix,
    consensus_scores,
    divergence_report,
    hybrid_utility,
    select,
)
from .embedding import (
    CachingEmbedder,
    DeterministicEmbedder,
    EmbeddingProviderConfig,
    EmbeddingVector,
    HttpEmbedder,
    cosine,
    embed_batch,
    make_embedder,
)
from .orchestrator import (
    GenerationOutcome,
    GenerationRequest,
    ProviderSpec,
    generate_pool,
    usc_select,
)
from .planner import (
    EnsemblePlan,
    FrontierPoint,
    InfeasiblePlanError,
    ModelCatalogEntry,
    pareto_frontier,
    plan,
)
from .riskmodel import (
    FailureEstimate,
    ModelErrorProfile,
    RiskParameters,
    beta_binomial_pmf,
    effective_sample_size,
    estimate_failure,
    failure_probability_exact,
    failure_probability_mc,
    hoeffding_bound,
    required_samples,
)
from .textsim import rouge_l, rouge_l_text, tokenize

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "CandidatePool",
    "CachingEmbedder",
    "ConsensusResult",
    "DeterministicEmbedder",
    "DivergenceReport",
    "EmbeddingProviderConfig",
    "EmbeddingVector",
    "EnsemblePlan",
    "FailureEstimate",
    "FrontierPoint",
    "GenerationOutcome",
    "GenerationRequest",
    "HttpEmbedder",
    "InfeasiblePlanError",
    "ModelCatalogEntry",
    "ModelDivergence",
    "ModelErrorProfile",
    "PoolTooSmallError",
    "ProviderSpec",
    "RiskParameters",
    "UtilityMatrix",
    "beta_binomial_pmf",
    "build_utility_matrix",
    "consensus_scores",
    "cosine",
    "divergence_report",
    "effective_sample_size",
    "embed_batch",
    "estimate_failure",
    "failure_probability_exact",
    "failure_probability_mc",
    "generate_pool",
    "hoeffding_bound",
    "hybrid_utility",
    "make_embedder",
    "pareto_frontier",
    "plan",
    "required_samples",
    "rouge_l",
    "rouge_l_text",
    "select",
    "tokenize",
    "usc_select",
]
