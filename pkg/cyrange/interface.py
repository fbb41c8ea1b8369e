"""Command-line interface."""

import json
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, NoReturn, Optional, Tuple

import click

from cyrange import __version__
from cyrange.agents import (
    EVAL_SEED_OFFSET,
    ObservationScaler,
    TrainingDivergedError,
    greedy_rollout,
    load_config,
    train_ce,
    train_dqn,
)
from cyrange.catalog import AbilityRegistry, get_plugin_manager
from cyrange.env import make_env
from cyrange.logger import get_logger
from cyrange.nets import CheckpointError, PolicyNet
from cyrange.observation import ObservationError
from cyrange.oracle import DEFAULT_MAX_STATES, bfs_oracle
from cyrange.report import (
    VALID_OUTPUTS,
    actions_table,
    eval_table,
    hosts_table,
    layout_table,
    oracle_table,
)
from cyrange.scenario import (
    ScenarioError,
    ScenarioSchemaError,
    ScenarioSpec,
    ScenarioValidationError,
    load_scenario,
    serialize_scenario,
)
from cyrange.utils import merge_layers, parse_overrides, write_json, write_jsonl

LOG = get_logger(__name__)

EXIT_DATA_ERROR = 1
EXIT_UNREACHABLE = 3

DEFAULT_BUDGETS = {"dqn": 20_000, "ce": 2_000}

OUTPUT_FILES = {
    "manifest": "manifest.json",
    "metrics": "metrics.csv",
    "policy": "policy.bin",
    "trace": "trace.jsonl",
}

format_option = click.option(
    "--format",
    "output_type",
    type=click.Choice(VALID_OUTPUTS),
    default="rst",
    show_default=True,
    help="Table format",
)
scenario_option = click.option(
    "--scenario",
    "-s",
    required=True,
    help="Path to a scenario JSON file, or the name of a built-in game (game1, game2)",
)


def _fail(message: str, code: int = EXIT_DATA_ERROR) -> NoReturn:
    click.echo(message, err=True)
    sys.exit(code)


def _load(scenario: str, registry: AbilityRegistry) -> ScenarioSpec:
    """Load a scenario, turning every data problem into exit code 1."""
    try:
        return load_scenario(scenario, registry=registry)
    except ScenarioSchemaError as err:
        LOG.error(f"Scenario {scenario} does not match the schema")
        _fail("\n".join([f"Invalid scenario {scenario}:"] + [f"  {e}" for e in err.errors]))
    except ScenarioValidationError as err:
        LOG.error(f"Scenario {scenario} failed validation")
        _fail("\n".join([f"Invalid scenario {scenario}:"] + [f"  {v}" for v in err.violations]))
    except ScenarioError as err:
        _fail(f"Unable to parse scenario {scenario}: {err}")
    except OSError as err:
        _fail(f"Unable to read scenario {scenario}: {err}")


def _registry() -> Tuple[Any, AbilityRegistry]:
    pm = get_plugin_manager()
    return pm, AbilityRegistry.from_plugins(pm)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@click.group()
@click.version_option(__version__, prog_name="cyrange")
def cli():
    """Train and evaluate red agents on simulated cyber ranges."""


@cli.command()
@scenario_option
@click.option(
    "--algo",
    type=click.Choice(["dqn", "ce"]),
    default="dqn",
    show_default=True,
    help="The learning algorithm",
)
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option(
    "--budget",
    type=click.IntRange(min=1),
    default=None,
    help="Environment steps (dqn) or episodes (ce). Defaults to 20000 and 2000",
)
@click.option(
    "--out",
    "-o",
    required=True,
    type=click.Path(file_okay=False),
    help="Directory for the run outputs",
)
@click.option(
    "--config",
    "-c",
    default=None,
    type=click.Path(exists=True, dir_okay=False),
    help="TOML file with a [cyrange.<algo>] hyperparameter table",
)
@click.option(
    "--hp",
    type=str,
    multiple=True,
    help="Hyperparameter override as key=value. Can be repeated",
)
@click.option(
    "--parallel-envs",
    type=click.IntRange(min=1),
    default=None,
    help="Number of environments rolled out in lockstep. Only used with ``--algo ce``",
)
@format_option
def train(scenario, algo, seed, budget, out, config, hp, parallel_envs, output_type):
    """Train a policy and write metrics, traces and a checkpoint.

    The run manifest is written to the output directory before training starts.
    ``trace.jsonl`` records a greedy evaluation of the trained policy on fresh
    seeds; training episodes are only summarized in ``metrics.csv``.
    """
    if parallel_envs is not None and algo != "ce":
        raise click.BadParameter("only supported with --algo ce", param_hint="--parallel-envs")
    try:
        overrides: Dict[str, Any] = parse_overrides(hp)
    except ValueError as err:
        raise click.BadParameter(str(err), param_hint="--hp") from err
    if parallel_envs is not None:
        overrides["parallel_envs"] = parallel_envs
    try:
        hyper = load_config(algo, config, merge_layers(overrides, {"seed": seed}))
    except ValueError as err:
        raise click.UsageError(str(err)) from err
    budget = DEFAULT_BUDGETS[algo] if budget is None else budget

    pm, registry = _registry()
    spec = _load(scenario, registry)
    try:
        env = make_env(spec, seed=seed, registry=registry)
    except ObservationError as err:
        _fail(str(err))

    outdir = Path(out)
    manifest: Dict[str, Any] = {
        "command": "train",
        "version": __version__,
        "scenario": str(scenario),
        "scenario_name": spec.name,
        "scenario_document": json.loads(serialize_scenario(spec)),
        "algo": algo,
        "seed": seed,
        "budget": budget,
        "hyperparameters": asdict(hyper),
        "started_at": _now(),
        "finished_at": None,
        "outputs": {key: str(outdir / name) for key, name in OUTPUT_FILES.items()},
    }
    write_json(outdir / OUTPUT_FILES["manifest"], manifest)
    pm.hook.pre_run_hook(manifest=manifest)

    try:
        if algo == "dqn":
            net, report = train_dqn(env, hyper, budget)  # type: ignore[arg-type]
        else:
            net, report = train_ce(env, hyper, budget)  # type: ignore[arg-type]
    except TrainingDivergedError as err:
        _fail(str(err))
    except ValueError as err:
        raise click.UsageError(str(err)) from err

    report.write_csv(outdir / OUTPUT_FILES["metrics"])
    net.save(outdir / OUTPUT_FILES["policy"])
    evaluator = make_env(spec, seed=seed + EVAL_SEED_OFFSET, registry=registry)
    rollout = greedy_rollout(net, evaluator, hyper.eval_episodes)
    write_jsonl(outdir / OUTPUT_FILES["trace"], rollout.trace)

    manifest["finished_at"] = _now()
    manifest["wall_time_s"] = report.wall_time
    write_json(outdir / OUTPUT_FILES["manifest"], manifest)
    click.echo(eval_table(spec, rollout, registry, output_type))
    pm.hook.post_run_hook(report=report, manifest=manifest)


@cli.command(name="eval")
@click.option(
    "--policy",
    "-p",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Path to a policy checkpoint",
)
@scenario_option
@click.option(
    "--episodes",
    type=click.IntRange(min=1),
    default=100,
    show_default=True,
    help="Number of greedy episodes",
)
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option(
    "--out",
    "-o",
    default=None,
    type=click.Path(dir_okay=False),
    help="Trace JSONL file. Defaults to eval_trace.jsonl next to the policy",
)
@format_option
def evaluate(policy, scenario, episodes, seed, out, output_type):
    """Evaluate a checkpoint with greedy rollouts."""
    _, registry = _registry()
    spec = _load(scenario, registry)
    try:
        net = PolicyNet.load(policy)
    except CheckpointError as err:
        _fail(f"Unable to load policy {policy}: {err}")
    try:
        env = make_env(spec, seed=seed, registry=registry)
    except ObservationError as err:
        _fail(str(err))

    scaler = ObservationScaler(env.layout)
    if net.input_size != scaler.size or net.output_size != env.action_count:
        _fail(
            f"Policy shape does not match the environment: checkpoint has "
            f"{net.input_size} inputs and {net.output_size} actions, environment has "
            f"{scaler.size} inputs (observation {env.observation_shape}) and "
            f"{env.action_count} actions"
        )

    rollout = greedy_rollout(net, env, episodes, scaler)
    trace = Path(policy).with_name("eval_trace.jsonl") if out is None else Path(out)
    write_jsonl(trace, rollout.trace)
    click.echo(eval_table(spec, rollout, registry, output_type))
    click.echo(f"\nmean return {rollout.mean_return:.2f}, std {rollout.std_return:.2f}")


@cli.command()
@scenario_option
@click.option(
    "--max-states",
    type=click.IntRange(min=1),
    default=DEFAULT_MAX_STATES,
    show_default=True,
    help="Stop the search after this many distinct states",
)
@format_option
def oracle(scenario, max_states, output_type):
    """Print a shortest plan under always-successful actions."""
    _, registry = _registry()
    spec = _load(scenario, registry)
    result = bfs_oracle(spec, registry, max_states=max_states)
    if not result.reachable:
        _fail(f"Goal of {spec.name} is unreachable: {result.reason}", EXIT_UNREACHABLE)

    click.echo(oracle_table(spec, result, registry, output_type))
    click.echo(f"\nplan length {result.length}, return {result.plan_return}")


@cli.command()
@scenario_option
@click.option(
    "--show",
    type=click.Choice(["hosts", "actions", "layout", "scenario"]),
    default="hosts",
    show_default=True,
    help="What to print",
)
@format_option
def inspect(scenario, show, output_type):
    """Print the hosts, the action space or the observation layout of a scenario."""
    _, registry = _registry()
    spec = _load(scenario, registry)
    output: Optional[str] = None
    if show == "hosts":
        output = hosts_table(spec, output_type)
    elif show == "actions":
        output = actions_table(spec, registry, output_type)
    elif show == "layout":
        output = layout_table(output_type=output_type)
    else:
        output = serialize_scenario(spec)
    click.echo(output)
