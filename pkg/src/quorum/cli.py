"""Command-line surface: selection, planning, risk calculation, generation,
frontier emission, and divergence monitoring.

All commands read and write line-delimited JSON records. Exit codes are a
scripting contract: 0 on success, 2 when any pool abstained, 1 on error.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from . import consensus, orchestrator, planner, records, riskmodel
from .config import RunConfig, load_config, validate_config_text
from .embedding import make_embedder

# Exit code 2 is reserved for the abstention signal, so click usage errors
# must exit 1 like every other error.
click.UsageError.exit_code = 1

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ABSTAINED = 2


def _emit(lines: list[str], output: str | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _warn(message: str) -> None:
    click.echo(f"warning: {message}", err=True)


def _load_run_config(config_path: str | None) -> RunConfig:
    try:
        return load_config(config_path)
    except Exception as exc:
        raise click.ClickException(f"config: {exc}") from exc


def _pick(flag_value, config_value):
    """Command-line flag beats config file beats built-in default."""
    return config_value if flag_value is None else flag_value


def _parse_profiles(k: int, m: int, mu: tuple[float, ...], rho: tuple[float, ...], tau: float):
    if len(mu) not in (1, k):
        raise click.ClickException(f"--mu must be given once or {k} times")
    if len(rho) not in (1, k):
        raise click.ClickException(f"--rho must be given once or {k} times")
    mus = list(mu) * k if len(mu) == 1 else list(mu)
    rhos = list(rho) * k if len(rho) == 1 else list(rho)
    try:
        profiles = tuple(
            riskmodel.ModelErrorProfile(mu=mu_k, rho=rho_k, samples=m)
            for mu_k, rho_k in zip(mus, rhos)
        )
        return riskmodel.RiskParameters(profiles=profiles, tau=tau)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc


config_option = click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="TOML run configuration.")
output_option = click.option("--output", type=click.Path(), default=None, help="Write records here instead of stdout.")


@click.group()
def main() -> None:
    """Consensus selection over model ensembles, with risk planning."""


@main.command()
@click.argument("pool_file", type=click.Path(exists=True))
@click.option("--alpha", type=float, default=None, help="Semantic weight in the hybrid utility.")
@click.option("--tau", type=float, default=None, help="Consensus threshold for selection.")
@click.option("--seed", type=int, default=None, help="Seed for the deterministic embedder.")
@config_option
@output_option
def select(pool_file: str, alpha: float | None, tau: float | None, seed: int | None, config_path: str | None, output: str | None) -> None:
    """Select a consensus candidate (or abstain) for each pool in POOL_FILE."""
    cfg = _load_run_config(config_path)
    alpha = _pick(alpha, cfg.alpha)
    tau = _pick(tau, cfg.tau)
    seed = _pick(seed, cfg.seed)
    output = _pick(output, cfg.output_path)
    with open(pool_file, encoding="utf-8") as handle:
        pools, issues = records.parse_pool_lines(handle)
    for issue in issues:
        _warn(f"{pool_file}:{issue.line_number}: {issue.message}")
    embedder = make_embedder(cfg.embedding, seed=seed)
    embedding_model = f"{cfg.embedding.endpoint}/{cfg.embedding.model}"
    lines: list[str] = []
    any_abstained = False
    any_error = bool(issues)
    for pool in pools:
        try:
            result = consensus.select(pool, alpha=alpha, tau=tau, embedder=embedder)
        except consensus.PoolTooSmallError as exc:
            _warn(f"pool {pool.prompt_id!r} skipped: {exc}")
            any_error = True
            continue
        any_abstained = any_abstained or result.abstained
        lines.append(records.result_to_line(pool, result, embedding_model))
    _emit(lines, output)
    if any_error:
        sys.exit(EXIT_ERROR)
    if any_abstained:
        sys.exit(EXIT_ABSTAINED)


@main.command()
@click.option("--catalog", "catalog_path", type=click.Path(exists=True), default=None, help="Model catalog JSON file.")
@click.option("--tau", type=float, default=0.8, show_default=True)
@click.option("--epsilon", type=float, default=1e-4, show_default=True, help="Failure tolerance.")
@click.option("--max-k", type=int, default=None, help="Largest model subset to consider.")
@click.option("--max-m", type=int, default=8, show_default=True, help="Largest per-model sample count.")
@config_option
@output_option
def plan(catalog_path: str | None, tau: float, epsilon: float, max_k: int | None, max_m: int, config_path: str | None, output: str | None) -> None:
    """Choose the cheapest ensemble meeting the failure tolerance."""
    cfg = _load_run_config(config_path)
    catalog = _load_catalog(_pick(catalog_path, cfg.catalog_path))
    output = _pick(output, cfg.output_path)
    try:
        chosen = planner.plan(catalog, tau=tau, epsilon=epsilon, max_models=max_k, max_samples=max_m)
    except planner.InfeasiblePlanError as exc:
        _emit([records.to_line({"feasible": False, "reason": str(exc), "best_p_fail": exc.best_p_fail})], output)
        sys.exit(EXIT_ERROR)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    _emit([records.plan_to_line(chosen)], output)


def _load_catalog(catalog_path: str | None):
    if catalog_path is None:
        raise click.ClickException("no catalog given: pass --catalog or set it in the config file")
    try:
        return records.parse_catalog(Path(catalog_path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"catalog: {exc}") from exc


@main.command()
@click.option("--k", type=int, required=True, help="Number of models.")
@click.option("--m", type=int, required=True, help="Samples per model.")
@click.option("--mu", type=float, multiple=True, required=True, help="Mean error rate (repeat for per-model values).")
@click.option("--rho", type=float, multiple=True, default=(0.0,), show_default=True, help="Intra-model correlation (repeat for per-model values).")
@click.option("--tau", type=float, default=0.8, show_default=True)
@click.option("--trials", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@output_option
def simulate(k: int, m: int, mu: tuple[float, ...], rho: tuple[float, ...], tau: float, trials: int, seed: int, output: str | None) -> None:
    """Estimate failure probability by exact, Hoeffding, and Monte Carlo routes."""
    params = _parse_profiles(k, m, mu, rho, tau)
    try:
        estimate = riskmodel.estimate_failure(params, trials=trials, seed=seed)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    mc_estimate, mc_stderr = estimate.monte_carlo  # trials given, so always present
    _emit(
        [
            records.to_line(
                {
                    "k": k,
                    "m": m,
                    "mu": list(mu),
                    "rho": list(rho),
                    "tau": tau,
                    "n": estimate.total_samples,
                    "n_eff": estimate.effective_samples,
                    "exact": estimate.exact,
                    "hoeffding": estimate.hoeffding,
                    "mc_estimate": mc_estimate,
                    "mc_stderr": mc_stderr,
                    "trials": trials,
                    "seed": seed,
                }
            )
        ],
        output,
    )


@main.command("riskexact")
@click.option("--k", type=int, required=True, help="Number of models.")
@click.option("--m", type=int, required=True, help="Samples per model.")
@click.option("--mu", type=float, multiple=True, required=True)
@click.option("--rho", type=float, multiple=True, default=(0.0,), show_default=True)
@click.option("--tau", type=float, default=0.8, show_default=True)
@output_option
def riskexact(k: int, m: int, mu: tuple[float, ...], rho: tuple[float, ...], tau: float, output: str | None) -> None:
    """Exact super-majority failure probability for one configuration."""
    params = _parse_profiles(k, m, mu, rho, tau)
    try:
        estimate = riskmodel.estimate_failure(params)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    _emit(
        [
            records.to_line(
                {
                    "k": k,
                    "m": m,
                    "mu": list(mu),
                    "rho": list(rho),
                    "tau": tau,
                    "n": estimate.total_samples,
                    "n_eff": estimate.effective_samples,
                    "exact": estimate.exact,
                    "hoeffding": estimate.hoeffding,
                }
            )
        ],
        output,
    )


@main.command()
@click.argument("prompt_file", type=click.Path(exists=True))
@click.option("--min-pool", type=int, default=None, help="Smallest acceptable pool size.")
@click.option("--parallelism", type=int, default=None, help="Concurrent completion calls.")
@click.option("--seed", type=int, default=None, help="Seed for stub providers.")
@config_option
@output_option
def generate(prompt_file: str, min_pool: int | None, parallelism: int | None, seed: int | None, config_path: str | None, output: str | None) -> None:
    """Generate a candidate pool per prompt via the configured providers."""
    cfg = _load_run_config(config_path)
    if not cfg.providers:
        raise click.ClickException("config declares no providers")
    min_pool = _pick(min_pool, cfg.generation.min_pool)
    parallelism = _pick(parallelism, cfg.generation.parallelism)
    seed = _pick(seed, cfg.seed)
    output = _pick(output, cfg.output_path)
    with open(prompt_file, encoding="utf-8") as handle:
        prompts, issues = records.parse_prompt_lines(handle)
    for issue in issues:
        _warn(f"{prompt_file}:{issue.line_number}: {issue.message}")
    factory = functools.partial(orchestrator.make_chat_backend, stub_seed=seed)
    lines: list[str] = []
    any_error = bool(issues)
    for prompt_id, prompt in prompts:
        request = orchestrator.GenerationRequest(
            prompt_id=prompt_id,
            prompt=prompt,
            ladders=dict(cfg.ladders),
            max_output_tokens=cfg.generation.max_output_tokens,
        )
        try:
            outcome = orchestrator.generate_pool(
                request,
                cfg.providers,
                backend_factory=factory,
                min_pool=min_pool,
                parallelism=parallelism,
            )
        except orchestrator.GenerationError as exc:
            _warn(f"prompt {prompt_id!r}: {exc}")
            any_error = True
            continue
        for failure in outcome.failures:
            _warn(
                f"prompt {prompt_id!r}: dropped {failure.provider_id}@T={failure.temperature}: "
                f"{failure.error}"
            )
        lines.extend(records.pool_to_lines(outcome.pool))
    _emit(lines, output)
    if any_error:
        sys.exit(EXIT_ERROR)


@main.command()
@click.option("--catalog", "catalog_path", type=click.Path(exists=True), default=None)
@click.option("--tau", type=float, default=0.8, show_default=True)
@click.option("--budgets", type=str, required=True, help="Comma-separated cost budgets.")
@click.option("--max-k", type=int, default=None)
@click.option("--max-m", type=int, default=8, show_default=True)
@config_option
@output_option
def pareto(catalog_path: str | None, tau: float, budgets: str, max_k: int | None, max_m: int, config_path: str | None, output: str | None) -> None:
    """Best achievable failure probability at each cost budget."""
    cfg = _load_run_config(config_path)
    catalog = _load_catalog(_pick(catalog_path, cfg.catalog_path))
    output = _pick(output, cfg.output_path)
    try:
        grid = [float(b) for b in budgets.split(",") if b.strip()]
    except ValueError as exc:
        raise click.ClickException(f"budgets: {exc}") from exc
    if not grid:
        raise click.ClickException("budgets: need at least one value")
    try:
        points = planner.pareto_frontier(catalog, tau=tau, budgets=grid, max_models=max_k, max_samples=max_m)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    _emit([records.frontier_point_to_line(p) for p in points], output)


@main.command()
@click.argument("result_files", type=click.Path(exists=True), nargs=-1, required=True)
@output_option
def monitor(result_files: tuple[str, ...], output: str | None) -> None:
    """Aggregate per-model divergence statistics from result files."""
    scored: list[tuple[consensus.CandidatePool, consensus.ConsensusResult]] = []
    any_error = False
    for result_file in result_files:
        with open(result_file, encoding="utf-8") as handle:
            rows, issues = records.parse_result_lines(handle)
        for issue in issues:
            _warn(f"{result_file}:{issue.line_number}: {issue.message}")
            any_error = True
        for row in rows:
            try:
                pool = consensus.CandidatePool.from_texts(
                    row["prompt_id"],
                    [("", c["model_id"], float(c["temperature"])) for c in row["candidates"]],
                )
                result = consensus.ConsensusResult(
                    prompt_id=row["prompt_id"],
                    selected_index=row.get("selected_index"),
                    scores=tuple(float(s) for s in row["scores"]),
                    tau=float(row["tau"]),
                    alpha=float(row.get("alpha", 0.0)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                _warn(f"{result_file}: record {row.get('prompt_id')!r} skipped: {exc}")
                any_error = True
                continue
            scored.append((pool, result))
    if not scored:
        raise click.ClickException("no result records found")
    report = consensus.divergence_report(scored)
    _emit(records.divergence_report_to_lines(report), output)
    if any_error:
        sys.exit(EXIT_ERROR)


@main.group("config")
def config_group() -> None:
    """Configuration helpers."""


@config_group.command("validate")
@click.argument("config_file", type=click.Path(exists=True))
def config_validate(config_file: str) -> None:
    """Check a config file against the schema; exit 1 if invalid."""
    text = Path(config_file).read_text(encoding="utf-8")
    cfg, problems = validate_config_text(text)
    if problems:
        for problem in problems:
            click.echo(f"invalid: {problem}", err=True)
        sys.exit(EXIT_ERROR)
    click.echo(
        f"ok: alpha={cfg.alpha} tau={cfg.tau} providers={len(cfg.providers)} "
        f"embedding={cfg.embedding.endpoint}"
    )


if __name__ == "__main__":
    main()
