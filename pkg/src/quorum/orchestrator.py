"""Live ensemble generation: fan a prompt out across chat-completion
providers along each provider's temperature ladder and assemble the
responses into a candidate pool.

Every (provider, temperature) pair contributes one candidate; requests run
concurrently under global and per-provider parallelism caps and the pool
is assembled as a deterministic merge ordered by (provider id,
temperature). Individual call failures degrade the pool instead of
halting it, down to a configurable minimum size. Temperature 0 is
requested at most once per provider: repeats at the deterministic setting
produce near-duplicates that only inflate within-model correlation.

Also includes the consistency-vote baseline, where a judge model reads the
numbered candidates and names the most consistent one.

Credentials are referenced by environment variable name and resolved only
when a request is sent; they never appear in specs, pools, logs, or
serialized results.
"""

from __future__ import annotations

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

from .consensus import Candidate, CandidatePool

DEFAULT_LADDER = (0.0, 0.25, 0.5, 0.75)

#: HTTP statuses worth retrying: rate limiting and transient server errors.
RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class GenerationError(Exception):
    """Base class for ensemble-generation failures."""


class AllProvidersFailedError(GenerationError):
    """Every (provider, temperature) call failed."""

    def __init__(self, message: str, failures: list["CallFailure"]):
        super().__init__(message)
        self.failures = failures


class PoolBelowMinimumError(GenerationError):
    """Too few calls survived to form a usable pool."""

    def __init__(self, message: str, failures: list["CallFailure"]):
        super().__init__(message)
        self.failures = failures


class ProviderCallError(GenerationError):
    """A single completion call failed after exhausting its retries."""


class JudgeParseError(GenerationError):
    """The judge's reply did not contain the expected selection sentence."""

    def __init__(self, message: str, raw_reply: str):
        super().__init__(message)
        self.raw_reply = raw_reply


class JudgeIndexError(GenerationError):
    """The judge named a response number outside the pool."""


@dataclass(frozen=True)
class ProviderSpec:
    """Connection settings for one chat-completion provider."""

    provider_id: str
    endpoint: str
    model: str
    credential_env: str = ""
    timeout: float = 60.0
    max_retries: int = 2
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")


@dataclass(frozen=True)
class GenerationRequest:
    """One prompt to fan out, with per-provider temperature ladders."""

    prompt_id: str
    prompt: str
    ladders: dict[str, tuple[float, ...]] = field(default_factory=dict)
    default_ladder: tuple[float, ...] = DEFAULT_LADDER
    max_output_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        for provider_id, ladder in {**self.ladders, "": self.default_ladder}.items():
            if ladder and len(set(ladder)) != len(ladder):
                where = f"provider {provider_id!r}" if provider_id else "default ladder"
                raise ValueError(f"duplicate temperatures in ladder for {where}")

    def ladder_for(self, provider_id: str) -> tuple[float, ...]:
        return self.ladders.get(provider_id, self.default_ladder)


@dataclass(frozen=True)
class CallFailure:
    """Failure record for one (provider, temperature) completion call."""

    provider_id: str
    temperature: float
    error: str


@dataclass(frozen=True)
class GenerationOutcome:
    """A generated pool plus warnings for any calls that were dropped."""

    pool: CandidatePool
    failures: tuple[CallFailure, ...]


class ChatBackend(Protocol):
    """Minimal chat-completion surface the orchestrator depends on."""

    def complete(
        self, model: str, messages: list[dict[str, str]], temperature: float, max_tokens: int
    ) -> str: ...


class HttpChatBackend:
    """Chat client for OpenAI-style JSON endpoints.

    Sends ``{"model", "messages", "temperature", "max_tokens"}`` and reads
    ``choices[0].message.content``. Transport errors and retryable HTTP
    statuses (rate limits, transient 5xx) back off exponentially up to the
    provider's retry budget; authentication and validation errors fail
    immediately.
    """

    def __init__(self, spec: ProviderSpec, client: httpx.Client | None = None):
        self.spec = spec
        self._client = client or httpx.Client(timeout=spec.timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.spec.credential_env:
            credential = os.environ.get(self.spec.credential_env)
            if credential:
                headers["Authorization"] = f"Bearer {credential}"
        return headers

    def complete(
        self, model: str, messages: list[dict[str, str]], temperature: float, max_tokens: int
    ) -> str:
        payload = {
            "model": model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        last_error = "no attempt made"
        for attempt in range(self.spec.max_retries + 1):
            try:
                response = self._client.post(
                    self.spec.endpoint, json=payload, headers=self._headers()
                )
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
            else:
                if response.status_code < 400:
                    body = response.json()
                    try:
                        return body["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, TypeError):
                        raise ProviderCallError(
                            f"{self.spec.provider_id}: malformed completion response"
                        ) from None
                if response.status_code not in RETRYABLE_STATUSES:
                    raise ProviderCallError(
                        f"{self.spec.provider_id}: HTTP {response.status_code}"
                    )
                last_error = f"HTTP {response.status_code}"
            if attempt < self.spec.max_retries:
                time.sleep(self.spec.backoff_base * (2**attempt))
        raise ProviderCallError(f"{self.spec.provider_id}: {last_error}")


class StubChatBackend:
    """Offline deterministic backend for tests and dry runs.

    Behavior is chosen by the endpoint:

    - ``stub://variants`` answers from a small fixed set of phrasings,
      picked by a hash of (seed, prompt, model, temperature) and biased
      toward the first phrasing so pools usually carry a consensus.
    - ``stub://judge-first`` always replies that Response 1 is the most
      consistent, for exercising the consistency-vote path.
    - ``stub://fail`` raises on every call.
    """

    def __init__(self, spec: ProviderSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed

    _VARIANTS = (
        "the quarterly review must be completed within thirty days",
        "the quarterly review must be completed within ninety days",
        "no quarterly review is required",
    )

    def complete(
        self, model: str, messages: list[dict[str, str]], temperature: float, max_tokens: int
    ) -> str:
        if self.spec.endpoint == "stub://fail":
            raise ProviderCallError(f"{self.spec.provider_id}: stub failure")
        if self.spec.endpoint == "stub://judge-first":
            return "The most consistent response is Response 1"
        prompt = messages[-1]["content"] if messages else ""
        digest = hashlib.blake2b(
            f"{self.seed}|{prompt}|{model}|{temperature}".encode("utf-8"), digest_size=8
        ).digest()
        value = int.from_bytes(digest, "big")
        if value % 4 < 2:
            variant = self._VARIANTS[0]
        else:
            variant = self._VARIANTS[1 + (value % 2)]
        return f"Per the source document, {variant}."


def make_chat_backend(spec: ProviderSpec, stub_seed: int = 0) -> ChatBackend:
    """Pick the backend implementation from the endpoint scheme."""
    if spec.endpoint.startswith("stub://"):
        return StubChatBackend(spec, seed=stub_seed)
    return HttpChatBackend(spec)


BackendFactory = Callable[[ProviderSpec], ChatBackend]


def generate_pool(
    request: GenerationRequest,
    providers: list[ProviderSpec],
    backend_factory: BackendFactory = make_chat_backend,
    min_pool: int | None = None,
    parallelism: int = 8,
    per_provider_parallelism: int = 4,
) -> GenerationOutcome:
    """Fan one prompt out to every (provider, ladder temperature) pair.

    Returns the assembled pool together with failure records for any calls
    that were dropped. Aborts with :class:`AllProvidersFailedError` when
    nothing survives, or :class:`PoolBelowMinimumError` when fewer than
    ``min_pool`` candidates survive (default: half the planned pool,
    rounded up).
    """
    if not providers:
        raise ValueError("at least one provider is required")
    jobs: list[tuple[ProviderSpec, float]] = []
    for spec in sorted(providers, key=lambda s: s.provider_id):
        ladder = request.ladder_for(spec.provider_id)
        if not ladder:
            raise ValueError(f"provider {spec.provider_id!r} has an empty ladder")
        for temperature in sorted(set(ladder)):
            jobs.append((spec, temperature))
    planned = len(jobs)
    if min_pool is None:
        min_pool = (planned + 1) // 2

    backends = {spec.provider_id: backend_factory(spec) for spec, _ in jobs}
    gates = {
        provider_id: threading.Semaphore(per_provider_parallelism) for provider_id in backends
    }
    messages = [{"role": "user", "content": request.prompt}]

    def run(job: tuple[ProviderSpec, float]) -> str:
        spec, temperature = job
        with gates[spec.provider_id]:
            return backends[spec.provider_id].complete(
                spec.model, messages, temperature, request.max_output_tokens
            )

    outcomes: dict[int, str | Exception] = {}
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as executor:
        futures = {executor.submit(run, job): slot for slot, job in enumerate(jobs)}
        for future, slot in futures.items():
            try:
                outcomes[slot] = future.result()
            except Exception as exc:  # per-call failures degrade, not halt
                outcomes[slot] = exc

    survivors: list[Candidate] = []
    failures: list[CallFailure] = []
    for slot, (spec, temperature) in enumerate(jobs):
        outcome = outcomes[slot]
        if isinstance(outcome, Exception):
            failures.append(
                CallFailure(
                    provider_id=spec.provider_id, temperature=temperature, error=str(outcome)
                )
            )
            continue
        survivors.append(
            Candidate(
                text=outcome,
                model_id=spec.provider_id,
                temperature=temperature,
                index=len(survivors),
            )
        )
    if not survivors:
        raise AllProvidersFailedError(
            f"all {planned} completion calls failed for prompt {request.prompt_id!r}",
            failures,
        )
    if len(survivors) < min_pool:
        raise PoolBelowMinimumError(
            f"only {len(survivors)} of {planned} calls survived for prompt "
            f"{request.prompt_id!r}; minimum pool is {min_pool}",
            failures,
        )
    pool = CandidatePool(prompt_id=request.prompt_id, candidates=tuple(survivors))
    return GenerationOutcome(pool=pool, failures=tuple(failures))


_JUDGE_PATTERN = re.compile(r"the most consistent response\s+is\s+response\s+(\d+)", re.IGNORECASE)


def render_consistency_vote_prompt(pool: CandidatePool, prompt: str) -> str:
    """Numbered-candidates prompt asking a judge to name the consistent one."""
    lines = [f"I have generated the following responses to the question: {prompt}", ""]
    for candidate in pool.candidates:
        lines.append(f"Response {candidate.index + 1}: {candidate.text}")
    lines.append("")
    lines.append(
        "Evaluate these responses. Select the most consistent response based on "
        'majority consensus. Start your answer with "The most consistent response '
        'is Response X" (without quotes).'
    )
    return "\n".join(lines)


def usc_select(
    pool: CandidatePool,
    judge: ProviderSpec,
    prompt: str | None = None,
    backend_factory: BackendFactory = make_chat_backend,
    max_tokens: int = 64,
) -> int:
    """Consistency-vote baseline: a judge model picks a candidate by number.

    Sends the numbered-candidates prompt to the judge at temperature 0 and
    parses "The most consistent response is Response X" into the 0-based
    index X - 1. An unparseable reply is reprompted once before raising
    :class:`JudgeParseError` with the raw reply attached; a number outside
    the pool raises :class:`JudgeIndexError`.
    """
    if pool.size < 2:
        raise ValueError(f"consistency vote needs at least 2 candidates, got {pool.size}")
    backend = backend_factory(judge)
    vote_prompt = render_consistency_vote_prompt(pool, prompt or pool.prompt_id)
    messages = [{"role": "user", "content": vote_prompt}]
    reply = ""
    for _ in range(2):  # one reprompt retry on an unparseable reply
        reply = backend.complete(judge.model, messages, 0.0, max_tokens)
        match = _JUDGE_PATTERN.search(reply)
        if match:
            number = int(match.group(1))
            if not 1 <= number <= pool.size:
                raise JudgeIndexError(
                    f"judge named Response {number} but the pool has {pool.size} candidates"
                )
            return number - 1
    raise JudgeParseError("judge reply did not name a response", raw_reply=reply)
