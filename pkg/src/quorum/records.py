"""Line-delimited record formats for pools, results, plans, and reports.

Every artifact is a stream of JSON objects, one per line, with a fixed
field order so that serialization is deterministic and parse/serialize
round-trips are byte-identical. Pool files carry one candidate per line
and group a pool's candidates on consecutive lines sharing a prompt id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, TextIO

from .consensus import CandidatePool, ConsensusResult, DivergenceReport
from .planner import EnsemblePlan, FrontierPoint, ModelCatalogEntry


@dataclass(frozen=True)
class ParseIssue:
    """A problem encountered while reading a record file."""

    line_number: int
    message: str


def to_line(record: dict) -> str:
    """Canonical one-line encoding for every record this package emits.

    Key order follows the dict, so parse -> to_line reproduces a line this
    package wrote byte for byte.
    """
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


_dumps = to_line


# --- candidate pools ---------------------------------------------------------


def pool_to_lines(pool: CandidatePool) -> list[str]:
    """One JSON line per candidate: prompt_id, text, model_id, temperature."""
    return [
        _dumps(
            {
                "prompt_id": pool.prompt_id,
                "text": c.text,
                "model_id": c.model_id,
                "temperature": c.temperature,
            }
        )
        for c in pool.candidates
    ]


def write_pools(pools: Iterable[CandidatePool], stream: TextIO) -> None:
    for pool in pools:
        for line in pool_to_lines(pool):
            stream.write(line + "\n")


def parse_pool_lines(lines: Iterable[str]) -> tuple[list[CandidatePool], list[ParseIssue]]:
    """Group candidate lines into pools, reporting malformed input.

    Consecutive lines sharing a prompt id form one pool. A malformed line
    poisons the pool it belongs to: the issue is reported with its line
    number and that pool is skipped, while the remaining pools still
    parse. When the bad line still names a prompt id, that pool is the
    one poisoned; an undecodable line poisons whichever pool is open at
    that point. A prompt id that reappears after its group has closed is
    also malformed, since pools must arrive contiguously.
    """
    pools: list[CandidatePool] = []
    issues: list[ParseIssue] = []
    finished_ids: set[str] = set()
    group_id: str | None = None
    group: list[tuple[str, str, float]] = []
    group_poisoned = False

    def close_group() -> None:
        nonlocal group_id, group, group_poisoned
        if group_id is not None:
            finished_ids.add(group_id)
            if not group_poisoned and group:
                pools.append(CandidatePool.from_texts(group_id, group))
        group_id = None
        group = []
        group_poisoned = False

    def open_group(prompt_id: str, line_number: int) -> None:
        nonlocal group_id, group_poisoned
        if prompt_id == group_id:
            return
        close_group()
        group_id = prompt_id
        if prompt_id in finished_ids:
            issues.append(
                ParseIssue(
                    line_number,
                    f"prompt_id {prompt_id!r} reappears after its pool closed",
                )
            )
            group_poisoned = True

    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise TypeError("candidate line must be a JSON object")
        except (json.JSONDecodeError, TypeError) as exc:
            issues.append(ParseIssue(line_number, f"malformed candidate line: {exc}"))
            group_poisoned = True
            continue
        prompt_id = record.get("prompt_id")
        if not isinstance(prompt_id, str):
            issues.append(
                ParseIssue(line_number, "malformed candidate line: prompt_id missing or not a string")
            )
            group_poisoned = True
            continue
        open_group(prompt_id, line_number)
        try:
            text = record["text"]
            model_id = record["model_id"]
            temperature = float(record["temperature"])
            if not isinstance(text, str) or not isinstance(model_id, str):
                raise TypeError("text and model_id must be strings")
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(ParseIssue(line_number, f"malformed candidate line: {exc}"))
            group_poisoned = True
            continue
        group.append((text, model_id, temperature))
    close_group()
    return pools, issues


# --- consensus results -------------------------------------------------------


def result_to_line(
    pool: CandidatePool, result: ConsensusResult, embedding_model: str = ""
) -> str:
    """Result record: verdict, all scores, candidate provenance, config echo."""
    selected = result.selected_index
    return _dumps(
        {
            "prompt_id": result.prompt_id,
            "verdict": "abstain" if result.abstained else "selected",
            "selected_index": selected,
            "selected_text": None if selected is None else pool.candidates[selected].text,
            "winner_score": result.winner_score,
            "scores": list(result.scores),
            "candidates": [
                {"model_id": c.model_id, "temperature": c.temperature}
                for c in pool.candidates
            ],
            "n": pool.size,
            "alpha": result.alpha,
            "tau": result.tau,
            "embedding_model": embedding_model,
        }
    )


def parse_result_lines(lines: Iterable[str]) -> tuple[list[dict], list[ParseIssue]]:
    """Read result records back as dicts, reporting malformed lines."""
    records: list[dict] = []
    issues: list[ParseIssue] = []
    required = ("prompt_id", "verdict", "scores", "candidates", "tau")
    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            missing = [key for key in required if key not in record]
            if missing:
                raise KeyError(", ".join(missing))
            if len(record["scores"]) != len(record["candidates"]):
                raise ValueError("scores and candidates lengths differ")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            issues.append(ParseIssue(line_number, f"malformed result line: {exc}"))
            continue
        records.append(record)
    return records, issues


# --- plans and frontier ------------------------------------------------------


def plan_to_dict(plan: EnsemblePlan) -> dict:
    return {
        "feasible": True,
        "model_ids": list(plan.model_ids),
        "samples_per_model": plan.samples_per_model,
        "total_samples": plan.total_samples,
        "predicted_p_fail": plan.predicted_p_fail,
        "bound_source": plan.bound_source,
        "total_cost": plan.total_cost,
        "tau": plan.tau,
        "epsilon": plan.epsilon,
        "temperatures": {m: list(ts) for m, ts in plan.temperatures.items()},
    }


def plan_to_line(plan: EnsemblePlan) -> str:
    return _dumps(plan_to_dict(plan))


def frontier_point_to_line(point: FrontierPoint) -> str:
    return _dumps(
        {
            "budget": point.budget,
            "p_fail": point.p_fail,
            "plan": None if point.plan is None else plan_to_dict(point.plan),
        }
    )


# --- divergence monitoring ---------------------------------------------------


def divergence_report_to_lines(report: DivergenceReport) -> list[str]:
    return [
        _dumps(
            {
                "model_id": d.model_id,
                "mean_divergence": d.mean_divergence,
                "sample_count": d.sample_count,
                "mu_hat": d.mu_hat,
                "rho_hat": d.rho_hat,
            }
        )
        for d in sorted(report.models.values(), key=lambda d: d.model_id)
    ]


# --- model catalog -----------------------------------------------------------


def parse_catalog(text: str) -> list[ModelCatalogEntry]:
    """Read a model catalog from its JSON document.

    Expected shape: ``{"models": [{"id", "cost_per_call", "mu", "rho",
    "ladder"?}, ...]}``; ``ladder`` defaults to (0, 0.25, 0.5, 0.75).
    """
    document = json.loads(text)
    models = document.get("models")
    if not isinstance(models, list) or not models:
        raise ValueError('catalog must contain a nonempty "models" list')
    entries = []
    for position, row in enumerate(models):
        try:
            entries.append(
                ModelCatalogEntry(
                    model_id=row["id"],
                    cost_per_call=float(row["cost_per_call"]),
                    mu=float(row["mu"]),
                    rho=float(row["rho"]),
                    ladder=tuple(float(t) for t in row.get("ladder", (0.0, 0.25, 0.5, 0.75))),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"catalog model #{position}: {exc}") from exc
    ids = [e.model_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("catalog model ids must be unique")
    return entries


# --- prompts -----------------------------------------------------------------


def parse_prompt_lines(lines: Iterable[str]) -> tuple[list[tuple[str, str]], list[ParseIssue]]:
    """Read prompt records: one ``{"prompt_id", "prompt"}`` object per line."""
    prompts: list[tuple[str, str]] = []
    issues: list[ParseIssue] = []
    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            prompt_id = record["prompt_id"]
            prompt = record["prompt"]
            if not isinstance(prompt_id, str) or not isinstance(prompt, str) or not prompt:
                raise TypeError("prompt_id and prompt must be nonempty strings")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            issues.append(ParseIssue(line_number, f"malformed prompt line: {exc}"))
            continue
        prompts.append((prompt_id, prompt))
    return prompts, issues
