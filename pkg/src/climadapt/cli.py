"""
Command-line entry point.

Every subcommand loads and validates the scenario named by `--config`, runs,
writes its outputs plus a `RunManifest` beside them, and prints a short
summary table on stdout (logs go to stderr).

Exit status: 0 on success, 2 on usage errors, 3 on invalid input, 4 on any
other failure.
"""

import argparse
import logging
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from pydantic import ValidationError
from tabulate import tabulate

from . import __version__
from .actions import InstalledMeasures, MeasureContext, MeasureKind, derive_parameters
from .agents.policies import POLICY_NAMES, make_policy, rollout
from .agents.qlearning import train
from .config import AgentSection, settings
from .env import AdaptationEnv, assess_year, trace_record
from .exceptions import (
    ClimAdaptError,
    DomainError,
    ScenarioValidationError,
    StateError,
)
from .formats import checkpoint, esri, tables
from .formats.trace import RunManifest, TraceWriter
from .logging import setup_logging
from .monitoring import monitor_command
from .qol import FitConfig, fit_weights, write_fit_report
from .rainfall import quantile, sample_event
from .rng import StreamPurpose, make_stream
from .scenario import Scenario, fingerprint, load_scenario, save_scenario
from .terrain.grid import max_depth_over

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

# Commands whose --out is a directory; the others write a single file.
DIRECTORY_COMMANDS = {"validate", "train", "evaluate", "rollout", "export-map"}

Handler = Callable[[argparse.Namespace, Scenario], list[Path]]


# --- argument types ---
def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a probability in [0, 1], got {text}")
    return value


def _install(text: str) -> tuple[str, str]:
    zone, sep, kind = text.partition(":")
    if not sep or not zone or not kind:
        raise argparse.ArgumentTypeError(f"expected ZONE:MEASURE, got {text!r}")
    return zone, kind


# --- shared helpers ---
def _installed(scenario: Scenario, installs: Sequence[tuple[str, str]]) -> InstalledMeasures:
    installed = InstalledMeasures.empty(len(scenario.zones))
    for zone_id, kind_name in installs:
        try:
            kind = MeasureKind(kind_name)
        except ValueError:
            raise DomainError(f"unknown measure {kind_name!r}") from None
        try:
            installed = installed.with_installed(scenario.zone_index(zone_id), kind)
        except StateError as e:
            raise DomainError(f"--install {zone_id}:{kind_name}: {e}") from e
    return installed


def _context(scenario: Scenario) -> MeasureContext:
    return MeasureContext(
        base_dem=scenario.dem,
        zones=scenario.zones,
        graph=scenario.graph,
        catalog=scenario.catalog,
        open_border=scenario.config.flood.open_border,
    )


def _event_intensity(scenario: Scenario, year: Optional[int], p: float) -> float:
    """The year's rain quantile, or no rain at all (the dry network)."""
    if year is None:
        return 0.0
    return quantile(scenario.rainfall, year, p)


def _print_table(rows: Sequence[Sequence[Any]], headers: Sequence[str]) -> None:
    print(tabulate(rows, headers=headers, tablefmt="github", floatfmt=".6g"))


def _manifest_path(command: str, out: Path) -> Path:
    if command in DIRECTORY_COMMANDS:
        return out / "manifest.json"
    return out.with_name(out.name + ".manifest.json")


# --- commands ---
def cmd_validate(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    _print_table(
        [
            ["scenario", scenario.name],
            ["fingerprint", fingerprint(scenario)],
            ["DEM", f"{scenario.dem.nrows}x{scenario.dem.ncols}"],
            ["nodes", len(scenario.graph.nodes)],
            ["edges", len(scenario.graph.edges)],
            ["zones", len(scenario.zones)],
            ["POIs", len(scenario.pois)],
            ["measures", len(scenario.catalog)],
        ],
        headers=["item", "value"],
    )
    if args.out is None:
        return []
    return [save_scenario(scenario, args.out)]


def cmd_sample_rain(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    rng = make_stream(scenario.master_seed, StreamPurpose.RAIN, args.seed)
    events = [sample_event(scenario.rainfall, args.year, rng) for _ in range(args.samples)]
    records = [
        {"sample": i, "year": e.year, "intensity_mm": e.intensity}
        for i, e in enumerate(events)
    ]
    intensities = np.array([e.intensity for e in events])
    _print_table(
        [[args.year, args.samples, intensities.min(), intensities.mean(), intensities.max()]],
        headers=["year", "samples", "min mm", "mean mm", "max mm"],
    )
    return [tables.write_records(args.out, records, ["sample", "year", "intensity_mm"])]


def cmd_simulate_flood(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    params = derive_parameters(_installed(scenario, args.install), _context(scenario))
    intensity = _event_intensity(scenario, args.year, args.quantile)
    assessed = assess_year(scenario, params, intensity)
    flood = assessed.flood
    _print_table(
        [
            [
                intensity,
                flood.inflow_volume,
                flood.ponded_volume,
                flood.outflow_volume,
                flood.flooded_cells(),
                float(flood.depth.max()),
            ]
        ],
        headers=["rain mm", "inflow m3", "ponded m3", "outflow m3", "flooded cells", "max depth m"],
    )
    return [esri.write_depth(args.out, flood, params.working_dem)]


def cmd_accessibility(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    params = derive_parameters(_installed(scenario, args.install), _context(scenario))
    assessed = assess_year(scenario, params, _event_intensity(scenario, args.year, args.quantile))
    categories = scenario.categories
    records = [
        {"zone_id": z.id, **{c: assessed.profiles[z.id][c] for c in categories}}
        for z in scenario.zones
    ]
    _print_table([list(r.values()) for r in records], headers=["zone", *categories])
    return [tables.write_records(args.out, records, ["zone_id", *categories])]


def cmd_qol(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    params = derive_parameters(_installed(scenario, args.install), _context(scenario))
    assessed = assess_year(scenario, params, _event_intensity(scenario, args.year, args.quantile))
    records = [
        {"zone_id": z.id, "population": z.population, "qol": assessed.qol[z.id]}
        for z in scenario.zones
    ]
    _print_table(
        [[r["zone_id"], r["population"], r["qol"]] for r in records],
        headers=["zone", "population", "Q"],
    )
    return [tables.write_records(args.out, records, ["zone_id", "population", "qol"])]


def cmd_fit_weights(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    if args.survey is not None:
        rows = tables.read_survey(args.survey)
    elif scenario.survey is not None:
        rows = list(scenario.survey)
    else:
        raise ScenarioValidationError("no survey: pass --survey or set data.survey")
    fit = scenario.config.qol.fit
    report = fit_weights(
        rows,
        FitConfig(
            l2_lambda=fit.l2_lambda if args.l2 is None else args.l2,
            max_iterations=fit.max_iterations,
            tolerance=fit.tolerance,
            include_intercept=fit.include_intercept,
        ),
    )
    _print_table(
        [[c, report.coefficients[c], report.weights.weights[c]] for c in report.categories],
        headers=["category", "coefficient", "weight"],
    )
    return [write_fit_report(args.out, report)]


def _agent_config(args: argparse.Namespace, scenario: Scenario) -> AgentSection:
    overrides: dict[str, Any] = {}
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.seed is not None:
        overrides["seed"] = args.seed
    return AgentSection.model_validate({**scenario.config.agent.model_dump(), **overrides})


def cmd_train(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    agent = _agent_config(args, scenario)
    env = AdaptationEnv(scenario)
    result = train(env, agent, progress=args.progress)
    out: Path = args.out
    outputs = [
        checkpoint.write_qtable(out / "qtable.tsv", result.table),
        tables.write_learning_curve(out / "curve.csv", result.curve),
    ]
    returns = np.array(result.returns)
    tail = returns[-max(1, len(returns) // 10) :]
    _print_table(
        [[agent.episodes, agent.seed, len(result.table), returns[0], tail.mean()]],
        headers=["episodes", "seed", "states", "first return", "final 10% mean"],
    )
    return outputs


@dataclass(frozen=True)
class EpisodeJob:
    config: str
    policy: str
    qtable: Optional[str]
    seed: int


@dataclass(frozen=True)
class EpisodeOutcome:
    seed: int
    total_return: float
    steps: int
    records: list[dict[str, Any]]


@lru_cache(maxsize=4)
def _cached_scenario(config: str) -> Scenario:
    return load_scenario(config)


def run_episode(job: EpisodeJob, scenario: Optional[Scenario] = None) -> EpisodeOutcome:
    """One evaluation episode; runs in a worker process under `--jobs`."""
    if scenario is None:
        scenario = _cached_scenario(job.config)
    table = checkpoint.read_qtable(job.qtable) if job.qtable else None
    env = AdaptationEnv(scenario)
    if table is not None and table.n_actions != env.n_actions:
        raise DomainError(
            f"Q-table has {table.n_actions} actions, environment {env.n_actions}"
        )
    policy = make_policy(job.policy, scenario.master_seed, job.seed, table)
    trajectory = rollout(env, policy, job.seed)
    records = [
        trace_record(job.seed, t.reward, info)
        for t, info in zip(trajectory.steps, trajectory.infos)
    ]
    return EpisodeOutcome(job.seed, trajectory.total_return, len(trajectory.steps), records)


def _write_traces(path: Path, outcomes: Sequence[EpisodeOutcome]) -> Path:
    with TraceWriter(path) as trace:
        for outcome in outcomes:
            for record in outcome.records:
                trace.write(record)
    return path


def cmd_evaluate(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    qtable = str(args.qtable) if args.qtable is not None else None
    jobs = [
        EpisodeJob(str(args.config), args.policy, qtable, args.seed + i)
        for i in range(args.episodes)
    ]
    if args.jobs > 1 and len(jobs) > 1:
        logger.info(f"Evaluating {len(jobs)} episode(s) on {args.jobs} worker(s)")
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(run_episode, jobs))
    else:
        outcomes = [run_episode(job, scenario) for job in jobs]

    out: Path = args.out
    returns = [o.total_return for o in outcomes]
    outputs = [
        _write_traces(out / f"trace_{args.policy}.jsonl", outcomes),
        tables.write_records(
            out / f"returns_{args.policy}.csv",
            [{"seed": o.seed, "return": o.total_return, "steps": o.steps} for o in outcomes],
            ["seed", "return", "steps"],
        ),
    ]
    _print_table(
        [[args.policy, len(outcomes), float(np.mean(returns)), min(returns), max(returns)]],
        headers=["policy", "episodes", "mean return", "min", "max"],
    )
    return outputs


def cmd_rollout(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    qtable = str(args.qtable) if args.qtable is not None else None
    outcome = run_episode(EpisodeJob(str(args.config), args.policy, qtable, args.seed), scenario)
    _print_table(
        [
            [r["year"], r["action"], r["rain_mm"], r["flooded_cells"], r["reward"]]
            for r in outcome.records
        ],
        headers=["year", "action", "rain mm", "flooded cells", "reward"],
    )
    print(f"return: {outcome.total_return!r}")
    return [_write_traces(args.out / "trace.jsonl", [outcome])]


def cmd_export_map(args: argparse.Namespace, scenario: Scenario) -> list[Path]:
    params = derive_parameters(_installed(scenario, args.install), _context(scenario))
    dry = assess_year(scenario, params, 0.0)
    intensity = _event_intensity(scenario, args.year, args.quantile)
    wet = assess_year(scenario, params, intensity)
    records = [
        {
            "zone_id": z.id,
            "name": z.name,
            "population": z.population,
            "qol_dry": dry.qol[z.id],
            "qol_flooded": wet.qol[z.id],
            "qol_loss": dry.qol[z.id] - wet.qol[z.id],
            "max_depth_m": max_depth_over(wet.flood, z.cells),
        }
        for z in scenario.zones
    ]
    _print_table(
        [
            [r["zone_id"], r["qol_dry"], r["qol_flooded"], r["qol_loss"], r["max_depth_m"]]
            for r in records
        ],
        headers=["zone", "Q dry", "Q flooded", "loss", "max depth m"],
    )
    out: Path = args.out
    outputs = [tables.write_records(out / "qol_map.csv", records, list(records[0]))]
    if args.depth:
        outputs.append(esri.write_depth(out / "depth.asc", wet.flood, params.working_dem))
    return outputs


COMMANDS: dict[str, Handler] = {
    "validate": cmd_validate,
    "sample-rain": cmd_sample_rain,
    "simulate-flood": cmd_simulate_flood,
    "accessibility": cmd_accessibility,
    "qol": cmd_qol,
    "fit-weights": cmd_fit_weights,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "rollout": cmd_rollout,
    "export-map": cmd_export_map,
}


# --- parser ---
def build_parser() -> argparse.ArgumentParser:
    formatter = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="Scenario run config (YAML)")
    common.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Console log level (default: from CLIMADAPT_ENVIRONMENT)",
    )

    def event_args(p: argparse.ArgumentParser, year_required: bool) -> None:
        p.add_argument(
            "--year",
            type=int,
            required=year_required,
            default=None,
            help="Event year; without it the network is dry",
        )
        p.add_argument("--quantile", type=_probability, default=0.5, help="Rain quantile p")
        p.add_argument(
            "--install",
            type=_install,
            action="append",
            default=[],
            metavar="ZONE:MEASURE",
            help="Installed measure (repeatable)",
        )

    def policy_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--policy", choices=POLICY_NAMES, default="do-nothing", help="Policy")
        p.add_argument("--qtable", type=Path, default=None, help="Q-table for --policy greedy")
        p.add_argument("--seed", type=_non_negative_int, default=0, help="(First) episode seed")

    parser = argparse.ArgumentParser(
        prog="climadapt",
        description="Urban climate-adaptation simulator and reinforcement-learning harness.",
        formatter_class=formatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "validate", parents=[common], formatter_class=formatter,
        help="Load and validate a scenario",
    )
    p.add_argument(
        "--out", type=Path, default=None,
        help="Optional directory for a canonical copy of the scenario",
    )

    p = sub.add_parser(
        "sample-rain", parents=[common], formatter_class=formatter,
        help="Sample annual maximum rain events",
    )
    p.add_argument("--year", type=int, required=True, help="Event year")
    p.add_argument("--samples", type=_positive_int, default=10, help="Number of events")
    p.add_argument("--seed", type=_non_negative_int, default=0, help="Rain stream seed")
    p.add_argument("--out", type=Path, required=True, help="Output CSV")

    p = sub.add_parser(
        "simulate-flood", parents=[common], formatter_class=formatter,
        help="Flood the terrain with one rain event",
    )
    event_args(p, year_required=True)
    p.add_argument("--out", type=Path, required=True, help="Output depth grid (ESRI ASCII)")

    p = sub.add_parser(
        "accessibility", parents=[common], formatter_class=formatter,
        help="Per-zone per-capita accessibility",
    )
    event_args(p, year_required=False)
    p.add_argument("--out", type=Path, required=True, help="Output CSV")

    p = sub.add_parser(
        "qol", parents=[common], formatter_class=formatter,
        help="Per-zone quality-of-life index",
    )
    event_args(p, year_required=False)
    p.add_argument("--out", type=Path, required=True, help="Output CSV")

    p = sub.add_parser(
        "fit-weights", parents=[common], formatter_class=formatter,
        help="Fit QoL weights from a satisfaction survey",
    )
    p.add_argument("--survey", type=Path, default=None, help="Survey CSV (default: data.survey)")
    p.add_argument("--l2", type=float, default=None, help="L2 penalty (default: qol.fit)")
    p.add_argument("--out", type=Path, required=True, help="Output fit report (YAML)")

    p = sub.add_parser(
        "train", parents=[common], formatter_class=formatter,
        help="Train a tabular Q-learning agent",
    )
    p.add_argument(
        "--episodes", type=_positive_int, default=None,
        help="Training episodes (default: agent.episodes)",
    )
    p.add_argument(
        "--seed", type=_non_negative_int, default=None,
        help="Training seed (default: agent.seed)",
    )
    p.add_argument(
        "--progress",
        action=argparse.BooleanOptionalAction,
        default=settings.RUNTIME.PROGRESS_BAR,
        help="Show a progress bar",
    )
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser(
        "evaluate", parents=[common], formatter_class=formatter,
        help="Evaluate a policy over several episode seeds",
    )
    policy_args(p)
    p.add_argument("--episodes", type=_positive_int, default=1, help="Episodes (seeds seed..)")
    p.add_argument(
        "--jobs", type=_positive_int, default=settings.RUNTIME.DEFAULT_JOBS,
        help="Worker processes; results do not depend on it",
    )
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser(
        "rollout", parents=[common], formatter_class=formatter,
        help="Run and trace one episode",
    )
    policy_args(p)
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser(
        "export-map", parents=[common], formatter_class=formatter,
        help="Per-zone dry vs flooded QoL (and optionally the depth grid)",
    )
    event_args(p, year_required=True)
    p.add_argument("--depth", action="store_true", help="Also write depth.asc")
    p.add_argument("--out", type=Path, required=True, help="Output directory")
    return parser


def run_command(args: argparse.Namespace, argv: Sequence[str]) -> RunManifest:
    """Loads the scenario, runs the subcommand and writes its manifest."""
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    scenario = load_scenario(args.config)
    manifest = RunManifest(
        tool_version=__version__,
        scenario_fingerprint=fingerprint(scenario),
        master_seed=scenario.master_seed,
        command=["climadapt", *argv],
        started_at=started,
        parameters={
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in sorted(vars(args).items())
            if k not in ("log_level",)
        },
    )
    handler = monitor_command(args.command, on_summary=manifest.resources.update)(
        COMMANDS[args.command]
    )
    outputs = handler(args, scenario)
    manifest.outputs = [str(p) for p in outputs]
    manifest.finished_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if args.out is not None:
        path = manifest.write(_manifest_path(args.command, Path(args.out)))
        logger.info(f"Manifest written to {path}")
    return manifest


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "policy", None) == "greedy" and args.qtable is None:
        parser.error("--policy greedy needs --qtable")

    setup_logging(script_name=f"climadapt_{args.command}", log_level_override=args.log_level)
    try:
        run_command(args, argv)
    except (ScenarioValidationError, DomainError, ValidationError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_VALIDATION
    except ClimAdaptError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
