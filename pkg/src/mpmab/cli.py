from __future__ import annotations

import argparse
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
from loguru import logger
from rich.console import Console
from rich.table import Table

from mpmab.config.logging import configure_logging
from mpmab.config.settings import settings
from mpmab.errors import ConfigError, MpmabError
from mpmab.harness.config_file import build_config, load_config_file
from mpmab.harness.experiment import ExperimentConfig, run_trial, sweep
from mpmab.harness.report import emit_sweep
from mpmab.lowerbound.obstruction import circle_points, verify_obstruction
from mpmab.strategy.schedule import phase_times
from mpmab.tree.dop import ab_sets, children, parent, parse_dop, tree_counts

console = Console()


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _experiment_parent() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=Path, help="key=value file; flags given on the command line win")
    shared.add_argument("--k", type=int)
    shared.add_argument("--m", type=int)
    shared.add_argument("--T", dest="T", type=int, help="horizon")
    shared.add_argument("--deltas", type=_floats, help="gap schedule, e.g. 1,0.25,0.05")
    shared.add_argument("--trials", type=int)
    shared.add_argument("--seed", type=int, help="shared seed")
    shared.add_argument("--feedback", choices=["undetectable", "weak", "strong", "full_info", "adversarial"])
    shared.add_argument("--adversary", choices=["flip", "zero", "one"])
    shared.add_argument("--algorithm", choices=["pareto", "single_phase_baseline", "naive_greedy"])
    shared.add_argument("--means", type=_floats, help="instance means p_1..p_K")
    shared.add_argument("--paper-constants", dest="paper_constants", action="store_true", default=None)
    shared.add_argument("--out", type=Path)
    return shared


def _logging_parent() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=None, help=f"loguru level (default {settings.LOG_LEVEL})")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _logging_parent()
    experiment = _experiment_parent()
    parser = argparse.ArgumentParser(
        prog="mpmab",
        description="Collision-free multi-player bandits: simulation, gap sweeps, tree and lower-bound tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common, experiment], help="run one seeded trial")

    p_sweep = sub.add_parser("sweep", parents=[common, experiment], help="gap grid -> CSV/SVG")
    p_sweep.add_argument("--gaps", type=_floats, help="gap grid (defaults to the schedule values)")
    p_sweep.add_argument("--instances-per-gap", dest="instances_per_gap", type=int)
    p_sweep.add_argument("--workers", type=int)

    p_sched = sub.add_parser("schedule", parents=[common, experiment], help="print eps_t, t_j and delta tables")
    p_sched.add_argument("--rows", type=int, default=12, help="number of eps_t sample points")

    p_tree = sub.add_parser("tree", parents=[common], help="inspect T_{K,m}")
    p_tree.add_argument("--k", type=int, required=True)
    p_tree.add_argument("--m", type=int, required=True)
    p_tree.add_argument("--max-depth", dest="max_depth", type=int)
    p_tree.add_argument("--dop", help="validate one vertex, e.g. '[{1,3}>_1{2,4}]'")

    p_obs = sub.add_parser("obstruction", parents=[common], help="verify the ring obstruction")
    p_obs.add_argument("--n", type=int, default=settings.CLAIM_MIN_POINTS + 1)
    p_obs.add_argument("--radius", type=float, default=0.15)
    p_obs.add_argument("--perturbation", type=float, default=settings.CLAIM_MAX_PERTURBATION)
    p_obs.add_argument("--center-sum", dest="center_sum", type=float, default=1.5)
    p_obs.add_argument("--gamma", type=float, default=settings.CLAIM_GAMMA)
    p_obs.add_argument("--window", type=int, default=settings.CLAIM_WINDOW)
    p_obs.add_argument("--seed", type=int, default=0)
    p_obs.add_argument("--workers", type=int, default=1)
    p_obs.add_argument("--out", type=Path)
    return parser


# ---------- Helpers ----------

_EXPERIMENT_FLAGS = (
    "k", "m", "T", "deltas", "trials", "seed", "feedback", "adversary", "algorithm", "means", "paper_constants",
)


def _merged_values(args: argparse.Namespace) -> dict[str, object]:
    """Config file values overridden by every flag the user actually passed."""
    values: dict[str, object] = load_config_file(args.config) if args.config else {}
    for key in (*_EXPERIMENT_FLAGS, "gaps", "instances_per_gap", "workers", "out"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def _experiment(values: dict[str, object]) -> ExperimentConfig:
    return build_config({k: v for k, v in values.items() if k not in ("gaps", "instances_per_gap", "workers", "out")})


def _announce(path: Path, shape: object) -> None:
    console.print(f"✅ Wrote: {path} | shape={shape}")


def _warn_vacuous(config: ExperimentConfig) -> None:
    schedule = phase_times(
        config.effective_deltas, config.k, config.horizon, config.consts, np.random.default_rng(config.shared_seed)
    )
    for j in schedule.vacuous_phases:
        logger.warning(
            "phase {} (Delta={:.4g}) starts at t={} > T={}: it never runs",
            j, schedule.deltas[j], schedule.phase_starts[j], config.horizon,
        )


# ---------- Commands ----------


def cmd_simulate(args: argparse.Namespace) -> int:
    values = _merged_values(args)
    config = _experiment(values)
    _warn_vacuous(config)
    result = run_trial(config, seed_index=0)

    table = Table(title=f"trial 0 | K={config.k} m={config.m} T={config.horizon} {config.algorithm}")
    table.add_column("field", style="cyan")
    table.add_column("value", justify="right")
    for key, val in result.to_row().items():
        table.add_row(key, f"{val:.6g}" if isinstance(val, float) else str(val))
    console.print(table)

    out = values.get("out")
    if out:
        path = Path(str(out))
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"config": json.loads(config.model_dump_json()), "result": asdict(result)}
        path.write_text(json.dumps(payload, indent=2))
        _announce(path, (len(result.checkpoints),))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    values = _merged_values(args)
    config = _experiment(values)
    _warn_vacuous(config)
    gaps = values.get("gaps") or config.effective_deltas
    instances = int(values.get("instances_per_gap") or 3)
    workers = int(values.get("workers") or 1)
    out_dir = Path(str(values.get("out") or settings.OUTPUTS_DIR))

    result = sweep(config, [float(g) for g in gaps], instances, workers=workers)  # type: ignore[union-attr]
    paths = emit_sweep(result, config, out_dir)

    table = Table(title="max mean pseudo-regret per gap")
    for column in result.summary.columns:
        table.add_column(column, justify="right")
    for row in result.summary.itertuples(index=False):
        table.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row))
    console.print(table)

    _announce(paths["csv"], result.summary.shape)
    _announce(paths["parquet"], result.trials.shape)
    _announce(paths["svg"], result.summary.shape)
    _announce(paths["meta"], "json")
    return 0


def cmd_schedule(args: argparse.Namespace) -> int:
    values = _merged_values(args)
    values.setdefault("m", 2)  # the schedule does not depend on m
    config = _experiment(values)
    consts = config.consts
    schedule = phase_times(
        config.effective_deltas, config.k, config.horizon, consts, np.random.default_rng(config.shared_seed)
    )
    for j in schedule.vacuous_phases:
        logger.warning("phase {} starts at t={} > T={}: it never runs", j, schedule.phase_starts[j], config.horizon)

    console.print(f"T_0 = {schedule.t0_warmup}  (K={config.k}, T={config.horizon}, paper={consts.paper_mode})")

    phases = Table(title="phases")
    frame = schedule.to_frame()
    for column in frame.columns:
        phases.add_column(column, justify="right")
    for row in frame.itertuples(index=False):
        phases.add_row(*(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    console.print(phases)

    eps_table = Table(title="eps_t")
    eps_table.add_column("t", justify="right")
    eps_table.add_column("eps_t", justify="right")
    grid = sorted({max(1, round(v)) for v in np.geomspace(1, config.horizon, max(2, args.rows))})
    for t in grid:
        eps_table.add_row(str(t), f"{schedule.epsilon(t):.6g}")
    console.print(eps_table)
    return 0


def cmd_tree(args: argparse.Namespace) -> int:
    if args.dop:
        vertex = parse_dop(args.dop, args.m)
        if vertex.k != args.k:
            raise ConfigError(f"{args.dop} lists {vertex.k} arms but --k is {args.k}")
        sets = ab_sets(vertex)
        table = Table(title=str(vertex))
        table.add_column("property", style="cyan")
        table.add_column("value")
        table.add_row("depth", str(vertex.depth))
        table.add_row("A", str(sorted(sets.a_set)))
        table.add_row("B", str(sorted(sets.b_set)))
        table.add_row("leaf", str(vertex.is_leaf))
        table.add_row("parent", str(parent(vertex)) if not vertex.is_root else "-")
        table.add_row("children", str(len(children(vertex))))
        console.print(table)
        return 0

    counts = tree_counts(args.k, args.m, args.max_depth)
    table = Table(title=f"T_{{{args.k},{args.m}}}" + (f" up to depth {args.max_depth}" if args.max_depth else ""))
    table.add_column("count", style="cyan")
    table.add_column("value", justify="right")
    for key, val in counts.items():
        table.add_row(key, str(val))
    console.print(table)
    return 0


def cmd_obstruction(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    ring = circle_points(
        args.n, args.center_sum, args.radius, args.perturbation, rng,
        gamma=args.gamma, window=args.window, seed=args.seed,
    )
    certificate = verify_obstruction(ring, workers=args.workers)
    text = certificate.to_text()
    style = "green" if certificate.infeasible else "yellow"
    console.print(text, style=style, highlight=False)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text + "\n")
        _announce(args.out, (len(text.splitlines()),))
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "schedule": cmd_schedule,
    "tree": cmd_tree,
    "obstruction": cmd_obstruction,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return _COMMANDS[args.command](args)
    except MpmabError as exc:
        console.print(f"[red]error:[/red] {exc}", highlight=False)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
