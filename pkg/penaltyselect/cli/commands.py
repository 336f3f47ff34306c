"""Command-line interface for penaltyselect."""

import json
import logging
import sys
from pathlib import Path
from typing import List, NoReturn, Optional

import click
from pydantic import ValidationError

from ..config.settings import CliConfig, ConfigurationError, init_settings, resolve_seed
from ..config.templates import render_experiment_report
from ..core.bayes import SimulationError, simulate_run, trajectory_frame
from ..core.metrics import Metric
from ..core.model import (
    Instance,
    InstanceFormatError,
    ModelError,
    load_instance,
    validate as validate_instance,
)
from ..core.solvers import (
    McisProblem,
    MpisProblem,
    SolverError,
    brute_force_mcis,
    brute_force_mpis,
    certify,
    greedy_mcis,
    greedy_mpis,
)
from ..experiments.generators import ExperimentError
from ..experiments.runner import load_experiment_spec, run_experiment, table_to_csv, write_table
from ..utils.helpers import (
    derive_rng,
    get_file_hash,
    parse_float_list,
    parse_index_list,
    read_float_list,
    setup_logging,
    stderr_console,
)

logger = logging.getLogger(__name__)

EXIT_DOMAIN = 1
EXIT_USAGE = 2

DOMAIN_ERRORS = (SolverError, ModelError, SimulationError)


def _fail(ctx: click.Context, message: str, code: int) -> NoReturn:
    stderr_console.print(f"[red]Error: {message}[/red]")
    if ctx.obj.get("debug"):
        stderr_console.print_exception()
    sys.exit(code)


def _cli_config(ctx: click.Context, **kwargs) -> CliConfig:
    try:
        return CliConfig(tolerances=ctx.obj["settings"].tolerances, **kwargs)
    except ValidationError as e:
        messages = "; ".join(error["msg"] for error in e.errors())
        _fail(ctx, messages, EXIT_USAGE)


def _load(
    ctx: click.Context, config: CliConfig, renormalize: bool = False, check: bool = True
) -> Instance:
    """Read an instance; with ``check``, any invariant violation ends the command."""
    try:
        instance = load_instance(
            config.input_path,
            renormalize=renormalize,
            tau_eq=config.tolerances.equivalence,
        )
    except InstanceFormatError as e:
        _fail(ctx, str(e), EXIT_USAGE)
    if check:
        violations = _report_violations(config, instance)
        if violations:
            _fail(ctx, f"invalid instance: {len(violations)} violation(s)", EXIT_DOMAIN)
    return instance


def _report_violations(config: CliConfig, instance: Instance) -> List[str]:
    violations = validate_instance(
        instance,
        row_tolerance=config.tolerances.row_sum,
        likelihood_tolerance=config.tolerances.likelihood_sum,
    )
    for violation in violations:
        click.echo(
            json.dumps({"path": str(config.input_path), "violation": violation}), err=True
        )
    return violations


def _emit(text: str, output: Optional[Path]) -> None:
    if output is None:
        click.echo(text)
    else:
        output.write_text(text if text.endswith("\n") else text + "\n")


@click.group(invoke_without_command=True)
@click.option("--version", is_flag=True, help="Show version and exit")
@click.option("--config", type=click.Path(), help="Path to settings JSON file")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose output")
@click.option("--debug", is_flag=True, help="Print tracebacks for errors")
@click.option("--tau-eq", type=float, help="Override the equivalence tolerance")
@click.option("--row-tolerance", type=float, help="Override the row-sum tolerance")
@click.pass_context
def main(
    ctx: click.Context,
    version: bool,
    config: Optional[str],
    verbose: bool,
    debug: bool,
    tau_eq: Optional[float],
    row_tolerance: Optional[float],
):
    """Select information sources for hypothesis testing under misclassification penalties."""
    if version:
        from .. import __version__

        click.echo(f"penaltyselect v{__version__}")
        sys.exit(0)

    ctx.ensure_object(dict)
    ctx.obj["debug"] = debug
    setup_logging(level="INFO" if verbose or debug else "WARNING", verbose=verbose)

    try:
        settings = init_settings(config_path=config)
    except Exception as e:
        _fail(ctx, f"Error initializing settings: {e}", EXIT_USAGE)

    overrides = {}
    if tau_eq is not None:
        overrides["equivalence"] = tau_eq
    if row_tolerance is not None:
        overrides["row_sum"] = row_tolerance
    if overrides:
        tolerances = settings.tolerances.model_copy(update=overrides)
        settings = settings.model_copy(update={"tolerances": tolerances})
    ctx.obj["settings"] = settings

    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@main.command()
@click.argument("instance_path", type=click.Path(path_type=Path))
@click.pass_context
def validate(ctx: click.Context, instance_path: Path):
    """Check an instance file; violations are written to stderr as JSON lines."""
    config = _cli_config(ctx, subcommand="validate", input_path=instance_path)
    instance = _load(ctx, config, check=False)
    violations = _report_violations(config, instance)
    sys.exit(EXIT_DOMAIN if violations else 0)


def _parse_bounds(ctx, bounds: Optional[str], bounds_file: Optional[Path]) -> Optional[List[float]]:
    if bounds is not None and bounds_file is not None:
        _fail(ctx, "give --bounds or --bounds-file, not both", EXIT_USAGE)
    try:
        if bounds is not None:
            return parse_float_list(bounds)
        if bounds_file is not None:
            return read_float_list(bounds_file)
    except (OSError, ValueError) as e:
        _fail(ctx, f"could not read penalty bounds: {e}", EXIT_USAGE)
    return None


@main.command()
@click.argument("instance_path", type=click.Path(path_type=Path))
@click.option("--mcis", "problem", flag_value="mcis", help="Minimum-cost selection under bounds")
@click.option("--mpis", "problem", flag_value="mpis", help="Minimum-penalty selection in a budget")
@click.option("--metric", type=click.Choice(["max", "total"]), default="max", show_default=True)
@click.option("--bounds", type=str, help="Comma-separated penalty bounds, one per hypothesis")
@click.option("--bounds-file", type=click.Path(path_type=Path), help="File of penalty bounds")
@click.option("--budget", type=float, help="Selection budget for --mpis")
@click.option("--brute-force", is_flag=True, help="Return the exhaustive optimum")
@click.option("--renormalize", is_flag=True, help="Renormalize penalty rows on load")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Write JSON here")
@click.pass_context
def solve(
    ctx: click.Context,
    instance_path: Path,
    problem: Optional[str],
    metric: str,
    bounds: Optional[str],
    bounds_file: Optional[Path],
    budget: Optional[float],
    brute_force: bool,
    renormalize: bool,
    output: Optional[Path],
):
    """Select sources greedily (or exhaustively) and print the Solution JSON."""
    settings = ctx.obj["settings"]
    parsed_bounds = _parse_bounds(ctx, bounds, bounds_file)
    config = _cli_config(
        ctx,
        subcommand="solve",
        input_path=instance_path,
        output_path=output,
        problem=problem,
        metric=metric,
        bounds=parsed_bounds,
        budget=budget,
        brute_force=brute_force,
    )
    instance = _load(ctx, config, renormalize=renormalize)
    chosen_metric = Metric(config.metric)

    try:
        if config.problem == "mcis":
            task = McisProblem(instance, tuple(config.bounds), chosen_metric)
        else:
            task = MpisProblem(instance, config.budget, chosen_metric)
    except SolverError as e:
        _fail(ctx, str(e), EXIT_USAGE)

    limit = settings.solver.brute_force_max_sources
    try:
        if isinstance(task, McisProblem):
            oracle, greedy = brute_force_mcis, greedy_mcis
        else:
            oracle, greedy = brute_force_mpis, greedy_mpis
        if brute_force:
            solution = oracle(task, limit)
        else:
            solution = greedy(task, settings.tolerances.coverage)
        if not brute_force and instance.n <= settings.solver.certificate_max_sources:
            solution = certify(
                task,
                solution,
                oracle(task, limit),
                gamma_exact_max_sources=settings.solver.gamma_exact_max_sources,
                tolerance=settings.tolerances.gamma,
            )
    except DOMAIN_ERRORS as e:
        _fail(ctx, str(e), EXIT_DOMAIN)

    _emit(solution.model_dump_json(indent=2), config.output_path)


@main.command()
@click.argument("instance_path", type=click.Path(path_type=Path))
@click.option("--subset", type=str, default="", help="Comma-separated source indices")
@click.option("--true-theta", type=str, default="0", help="True hypothesis (label or index)")
@click.option("--horizon", type=int, help="Number of observations")
@click.option("--seed", type=int, help="Master seed")
@click.option("--delta", type=float, help="Failure probability for N and N~")
@click.option("--epsilon", type=float, help="Deviation used in the belief bounds")
@click.option("--mu-th", type=float, help="Belief threshold for N~")
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Trajectory CSV path")
@click.option("--diagnostics", type=click.Path(path_type=Path), help="Diagnostics JSON path")
@click.pass_context
def simulate(
    ctx: click.Context,
    instance_path: Path,
    subset: str,
    true_theta: str,
    horizon: Optional[int],
    seed: Optional[int],
    delta: Optional[float],
    epsilon: Optional[float],
    mu_th: Optional[float],
    output: Optional[Path],
    diagnostics: Optional[Path],
):
    """Simulate Bayesian beliefs and write the trajectory as CSV."""
    defaults = ctx.obj["settings"].simulation
    try:
        seed = resolve_seed(seed)
        sources = parse_index_list(subset)
    except (ConfigurationError, ValueError) as e:
        _fail(ctx, str(e), EXIT_USAGE)
    config = _cli_config(
        ctx, subcommand="simulate", input_path=instance_path, output_path=output, seed=seed
    )
    instance = _load(ctx, config)
    if seed is None:
        logger.info("no seed given; this trajectory is not reproducible")

    try:
        theta = instance.hypotheses.index_of(true_theta)
        result = simulate_run(
            instance,
            sources,
            theta,
            defaults.horizon if horizon is None else horizon,
            derive_rng(seed, 0),
            epsilon=epsilon,
            delta=defaults.delta if delta is None else delta,
            mu_th=defaults.mu_th if mu_th is None else mu_th,
        )
    except (IndexError, KeyError, ValueError) as e:
        _fail(ctx, str(e), EXIT_USAGE)
    except DOMAIN_ERRORS as e:
        _fail(ctx, str(e), EXIT_DOMAIN)

    frame = trajectory_frame(result, instance.hypotheses.labels)
    _emit(table_to_csv(frame), output)
    report = result.diagnostics.model_dump_json(indent=2)
    if diagnostics is not None:
        diagnostics.write_text(report + "\n")
    else:
        click.echo(result.diagnostics.model_dump_json(), err=True)


@main.command()
@click.argument("spec_path", type=click.Path(path_type=Path))
@click.option("--output", "-o", type=click.Path(path_type=Path), help="Result CSV path")
@click.option("--summary", type=click.Path(path_type=Path), help="Summary JSON path")
@click.option("--threads", type=int, help="Worker count; never changes results")
@click.option("--seed", type=int, help="Override the spec's master seed")
@click.option("--report", type=click.Path(path_type=Path), help="Markdown report path")
@click.pass_context
def experiment(
    ctx: click.Context,
    spec_path: Path,
    output: Optional[Path],
    summary: Optional[Path],
    threads: Optional[int],
    seed: Optional[int],
    report: Optional[Path],
):
    """Run a batch experiment; exits 1 if any certificate fails."""
    settings = ctx.obj["settings"]
    threads = threads or settings.experiment.threads
    config = _cli_config(
        ctx, subcommand="experiment", input_path=spec_path, output_path=output, threads=threads
    )
    try:
        spec = load_experiment_spec(config.input_path)
        seed = resolve_seed(seed)
    except (ExperimentError, ConfigurationError) as e:
        _fail(ctx, str(e), EXIT_USAGE)
    if seed is not None:
        spec = spec.model_copy(update={"master_seed": seed})

    try:
        result = run_experiment(
            spec,
            threads=config.threads,
            max_attempts=settings.experiment.max_resample_attempts,
            tolerance=settings.tolerances.gamma,
        )
    except (ExperimentError,) + DOMAIN_ERRORS as e:
        _fail(ctx, str(e), EXIT_DOMAIN)
    result.summary.spec_sha256 = get_file_hash(spec_path)

    summary_json = result.summary.model_dump_json(indent=2)
    if output is not None:
        write_table(result.table, output)
        summary = summary or output.with_suffix(".summary.json")
    else:
        click.echo(table_to_csv(result.table), nl=False)
    if summary is not None:
        summary.write_text(summary_json + "\n")
    else:
        click.echo(summary_json, err=True)
    if report is not None:
        report.write_text(render_experiment_report(result.summary))

    sys.exit(0 if result.summary.all_certificates_pass else EXIT_DOMAIN)


if __name__ == "__main__":
    main()
