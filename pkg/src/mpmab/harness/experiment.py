from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from mpmab.config.settings import settings
from mpmab.environment.bandit import (
    FeedbackModel,
    FeedbackVariant,
    Instance,
    SharedRandomness,
    gap,
    regret_increment,
    step,
)
from mpmab.errors import ConfigError, InvalidInputError
from mpmab.strategy.player import PlayerState, act, naive_greedy_act, observe, observe_vector
from mpmab.strategy.schedule import (
    Schedule,
    ScheduleConstants,
    epsilon_t,
    normalize_schedule,
    phase_times,
)
from mpmab.tree.coloring import ColoringMemo
from mpmab.tree.dop import Dop, format_dop, is_ancestor, p_star, tree_distance
from mpmab.tree.partition import PartitionParams

Algorithm = Literal["pareto", "single_phase_baseline", "naive_greedy"]


class ExperimentConfig(BaseModel):
    """
    Phase A: One experiment, validated on construction

    - k arms, m players (k > m >= 2), horizon T.
    - deltas: gap schedule; T^{-1/2} is appended when missing, then normalized.
    - trials, shared_seed, private_seed_base: seed index i of a trial draws its shared
      stream from (shared_seed, i) and the environment / player streams from
      (private_seed_base, i, 0) / (private_seed_base, i, X).
    - feedback / adversary: observation model of the environment.
    - algorithm: pareto | single_phase_baseline | naive_greedy.
    - means: instance used by run_trial (sweeps fill it per sampled instance).
    """

    model_config = ConfigDict(frozen=True)

    k: int = Field(ge=3)
    m: int = Field(ge=2)
    horizon: int = Field(ge=4)
    deltas: tuple[float, ...] = Field(default=(1.0,), validate_default=True)
    trials: int = Field(default=1, ge=1)
    shared_seed: int = Field(default=0, ge=0)
    private_seed_base: int = Field(default=1000, ge=0)
    feedback: FeedbackVariant = FeedbackVariant.UNDETECTABLE
    adversary: str = "flip"
    consts: ScheduleConstants = Field(default_factory=ScheduleConstants)
    algorithm: Algorithm = "pareto"
    means: tuple[float, ...] | None = None

    @field_validator("deltas")
    @classmethod
    def _close_schedule(cls, deltas: tuple[float, ...], info: ValidationInfo) -> tuple[float, ...]:
        horizon = info.data.get("horizon")
        if horizon is None:
            return deltas
        floor = horizon**-0.5
        values = list(deltas)
        if not values or values[-1] < floor - 1e-12:
            raise ValueError(f"deltas must stay >= T^(-1/2) = {floor:.6g}")
        if abs(values[-1] - floor) > 1e-12:
            values.append(floor)
        else:
            values[-1] = floor
        try:
            return normalize_schedule(values)
        except InvalidInputError as exc:
            raise ValueError(str(exc)) from exc

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        if self.m >= self.k:
            raise ValueError(f"need k > m, got k={self.k}, m={self.m}")
        if self.means is not None:
            Instance(p=self.means, m=self.m)
            if len(self.means) != self.k:
                raise ValueError(f"means has {len(self.means)} entries, expected k={self.k}")
        return self

    @property
    def effective_deltas(self) -> tuple[float, ...]:
        """The single-phase baseline ignores the schedule and runs (1, T^{-1/2})."""
        if self.algorithm == "single_phase_baseline":
            return (1.0, self.horizon**-0.5)
        return self.deltas

    def instance(self) -> Instance:
        if self.means is None:
            raise ConfigError("this run needs instance means (means=...)")
        return Instance(p=self.means, m=self.m)


# ---------- Omega diagnostics ----------


@dataclass(frozen=True)
class OmegaSnapshot:
    """State of one player at the start of step t."""

    t: int
    player: int
    n: tuple[int, ...]
    q: tuple[float, ...]
    relevant: tuple[int, ...]


@dataclass
class OmegaTrace:
    k: int
    horizon: int
    consts: ScheduleConstants
    t0_warmup: int
    snapshots: list[OmegaSnapshot] = field(default_factory=list)


@dataclass(frozen=True)
class OmegaDiagnostics:
    omega1_ok: bool
    omega2_ok: bool
    omega1_step: int | None
    omega2_step: int | None
    checked: int

    @property
    def holds(self) -> bool:
        return self.omega1_ok and self.omega2_ok


def _omega1_divisor(k: int, consts: ScheduleConstants) -> float:
    # paper_mode radius eps_n / (100 K^{3/2}); the desk radius keeps the same sqrt(log(KT)/n) shape
    if consts.paper_mode:
        return 100.0 * k**1.5
    return consts.c_eps * math.sqrt(k)


def check_omega(trace: OmegaTrace, instance: Instance) -> OmegaDiagnostics:
    """
    Omega_1: |q(i) - p(i)| < eps_{n(i)} / divisor for every arm with n(i) >= 1, at t >= T_0.
    Omega_2: n(i) >= floor(N(i) / 2K) at every snapshot.
    """
    divisor = _omega1_divisor(trace.k, trace.consts)
    first1: int | None = None
    first2: int | None = None
    for snap in trace.snapshots:
        for i in range(trace.k):
            n_i = snap.n[i]
            if first2 is None and n_i < snap.relevant[i] // (2 * trace.k):
                first2 = snap.t
            if first1 is None and snap.t >= trace.t0_warmup and n_i >= 1:
                radius = epsilon_t(n_i, trace.k, trace.horizon, trace.consts) / divisor
                if abs(snap.q[i] - instance.p[i]) >= radius:
                    first1 = snap.t
    return OmegaDiagnostics(
        omega1_ok=first1 is None,
        omega2_ok=first2 is None,
        omega1_step=first1,
        omega2_step=first2,
        checked=len(trace.snapshots),
    )


# ---------- Trials ----------


@dataclass(frozen=True)
class LatePhaseFlag:
    """Phase j started at t_j within the horizon on an instance with gap >= Delta_j."""

    phase: int
    start: int
    zero_regret_after: bool


@dataclass(frozen=True)
class TrialResult:
    """
    Phase A: Outcome of one seeded trial

    - checkpoints / regret: cumulative pseudo-regret at geometric checkpoints (and T).
    - collisions: steps at which at least two players pulled the same arm.
    - vertex_digest: sha256 of every player's vertex at every step.
    - *_step fields: first step witnessing a violated runtime property (None = held).
    """

    seed_index: int
    checkpoints: tuple[int, ...]
    regret: tuple[float, ...]
    final_regret: float
    regret_at_warmup: float
    realized_regret: float
    collisions: int
    vertex_digest: str
    path_violations: int
    path_violation_step: int | None
    absorption_step: int | None
    absorption_step_strict: int | None
    safe_margin_step: int | None
    omega: OmegaDiagnostics
    late_phase: tuple[LatePhaseFlag, ...]

    @property
    def clean(self) -> bool:
        return self.path_violation_step is None and self.collisions == 0

    def to_row(self) -> dict[str, object]:
        return {
            "seed_index": self.seed_index,
            "final_regret": self.final_regret,
            "regret_at_warmup": self.regret_at_warmup,
            "realized_regret": self.realized_regret,
            "collisions": self.collisions,
            "path_violations": self.path_violations,
            "path_violation_step": self.path_violation_step,
            "absorption_step": self.absorption_step,
            "absorption_step_strict": self.absorption_step_strict,
            "safe_margin_step": self.safe_margin_step,
            "omega1_ok": self.omega.omega1_ok,
            "omega2_ok": self.omega.omega2_ok,
            "late_phase_ok": all(flag.zero_regret_after for flag in self.late_phase),
            "vertex_digest": self.vertex_digest,
        }


def checkpoints(horizon: int, growth: float | None = None) -> tuple[int, ...]:
    """Geometric grid ceil(growth^k) clipped to the horizon, always ending at T."""
    g = settings.TRAJECTORY_GROWTH if growth is None else growth
    out = set()
    value = 1.0
    while value < horizon:
        out.add(math.ceil(value))
        value *= g
    out.add(horizon)
    return tuple(sorted(out))


def on_one_path(vertices: Sequence[Dop], special: Dop) -> bool:
    """Pairwise tree distance <= 1, and every vertex other than `special` on a single root path."""
    for i, a in enumerate(vertices):
        for b in vertices[i + 1 :]:
            if tree_distance(a, b) > 1:
                return False
    chain = sorted({v for v in vertices if v != special}, key=lambda v: v.depth)
    return all(is_ancestor(a, b) for a, b in zip(chain, chain[1:]))


class _VertexLog:
    """Numbers vertices in first-seen order and hashes the per-step id table."""

    def __init__(self, horizon: int, m: int) -> None:
        self.ids: dict[Dop, int] = {}
        self.table = np.full((horizon, m), -1, dtype=np.int32)

    def record(self, t: int, vertices: Sequence[Dop]) -> None:
        for x, v in enumerate(vertices):
            self.table[t - 1, x] = self.ids.setdefault(v, len(self.ids))

    def digest(self) -> str:
        h = hashlib.sha256(self.table.tobytes())
        for v, idx in self.ids.items():
            h.update(f"{idx}:{format_dop(v)}\n".encode())
        return h.hexdigest()


def _schedule_and_params(config: ExperimentConfig, shared: np.random.Generator) -> tuple[Schedule, PartitionParams]:
    schedule = phase_times(config.effective_deltas, config.k, config.horizon, config.consts, shared)
    c = PartitionParams.random(
        config.k, eps=1.0, delta=1.0, rng=shared, early_exit=config.algorithm != "single_phase_baseline"
    )
    return schedule, c


def run_trial(config: ExperimentConfig, seed_index: int) -> TrialResult:
    """
    Simulate T steps of m players against the configured instance.

    Runtime properties (adjacency / single path, absorption at P_*(p), safe margin,
    Omega) are recorded with their first witnessing step; they never abort the trial.
    """
    instance = config.instance()
    k, m, horizon = config.k, config.m, config.horizon
    shared = np.random.default_rng([config.shared_seed, seed_index])
    env_rng = np.random.default_rng([config.private_seed_base, seed_index, 0])
    players = [
        PlayerState(player=x, k=k, m=m, rng=np.random.default_rng([config.private_seed_base, seed_index, x]))
        for x in range(1, m + 1)
    ]
    schedule, c = _schedule_and_params(config, shared)
    pis = shared.permuted(np.tile(np.arange(1, k + 1, dtype=np.int16), (horizon, 1)), axis=1)
    model = FeedbackModel.named(config.feedback.value, config.adversary)
    tracks_vertices = config.algorithm != "naive_greedy"

    special = p_star(instance.p, m)
    true_gap = gap(instance)
    p_sorted = sorted(instance.p, reverse=True)
    mth = p_sorted[m - 1]

    grid = checkpoints(horizon)
    grid_set = set(grid)
    trace = OmegaTrace(k=k, horizon=horizon, consts=config.consts, t0_warmup=schedule.t0_warmup)
    vertex_log = _VertexLog(horizon, m)
    memo = ColoringMemo()

    cumulative = 0.0
    realized = 0.0
    trajectory: list[float] = []
    phase_by_start = {start: j for j, start in enumerate(schedule.phase_starts)}
    regret_before: dict[int, float] = {}
    warmup_regret = 0.0
    collisions = 0
    path_violations = 0
    path_step: int | None = None
    first_special: int | None = None
    absorption_step: int | None = None
    absorption_strict: int | None = None
    safe_step: int | None = None

    for t in range(1, horizon + 1):
        if t in grid_set:
            for state in players:
                trace.snapshots.append(
                    OmegaSnapshot(
                        t=t,
                        player=state.player,
                        n=tuple(int(v) for v in state.n),
                        q=tuple(float(v) for v in state.q),
                        relevant=tuple(int(v) for v in state.relevant),
                    )
                )
        if t in phase_by_start:
            regret_before[phase_by_start[t]] = cumulative

        pi_t = tuple(pis[t - 1].tolist())
        if config.algorithm == "naive_greedy":
            arms = [naive_greedy_act(state, t, schedule) for state in players]
        else:
            cache = memo.for_order(pi_t)
            arms = [act(state, t, schedule, c, pi_t, cache) for state in players]

        shared_t = None
        if model.variant is FeedbackVariant.ADVERSARIAL:
            shared_t = SharedRandomness(pi=pi_t, c=c.c, delta=schedule.delta(t))
        outcome = step(instance, arms, model, env_rng, t, shared=shared_t)
        for state, arm, obs in zip(players, arms, outcome.observations):
            if obs.vector is not None:
                observe_vector(state, obs.vector)
            else:
                observe(state, arm, obs.y)

        increment = regret_increment(instance, arms)
        cumulative += increment
        realized += instance.top_sum - sum(outcome.rewards)
        if any(outcome.collided):
            collisions += 1
        if t == schedule.t0_warmup:
            warmup_regret = cumulative
        if t in grid_set:
            trajectory.append(cumulative)

        if not tracks_vertices or t <= schedule.t0_warmup:
            continue

        vertices = [state.last_vertex for state in players]
        vertex_log.record(t, vertices)  # type: ignore[arg-type]

        if not on_one_path(vertices, special):  # type: ignore[arg-type]
            path_violations += 1
            if path_step is None:
                path_step = t
                logger.warning("trial {}: players off a single root path at t={}", seed_index, t)

        if first_special is None and special in vertices:
            first_special = t
        if first_special is not None:
            if any(v != special and not v.is_root for v in vertices):  # type: ignore[union-attr]
                if absorption_step is None and t >= 10 * first_special:
                    absorption_step = t
                if absorption_strict is None and t >= 10 * k * k * first_special:
                    absorption_strict = t

        if safe_step is None:
            eps = schedule.epsilon(t)
            needed = [i + 1 for i, v in enumerate(instance.p) if v >= mth - eps]
            for v in vertices:
                kept = set(v.relevant_arms)  # type: ignore[union-attr]
                if any(a not in kept for a in needed):
                    safe_step = t
                    break

    if schedule.t0_warmup >= horizon:
        warmup_regret = cumulative

    late = tuple(
        LatePhaseFlag(phase=j, start=start, zero_regret_after=cumulative - regret_before[j] <= 1e-9)
        for j, start in enumerate(schedule.phase_starts)
        if start <= horizon and true_gap >= schedule.deltas[j]
    )
    omega = check_omega(trace, instance)
    result = TrialResult(
        seed_index=seed_index,
        checkpoints=grid,
        regret=tuple(trajectory),
        final_regret=cumulative,
        regret_at_warmup=warmup_regret,
        realized_regret=realized,
        collisions=collisions,
        vertex_digest=vertex_log.digest(),
        path_violations=path_violations,
        path_violation_step=path_step,
        absorption_step=absorption_step,
        absorption_step_strict=absorption_strict,
        safe_margin_step=safe_step,
        omega=omega,
        late_phase=late,
    )
    logger.debug(
        "trial {} done: regret={:.3f} collisions={} path_violations={}",
        seed_index, cumulative, collisions, path_violations,
    )
    return result


def run_trials(config: ExperimentConfig, workers: int = 1, seed_offset: int = 0) -> list[TrialResult]:
    """Trials seed_offset .. seed_offset + trials - 1, returned in seed order whatever `workers` is."""
    seeds = list(range(seed_offset, seed_offset + config.trials))
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_trial, [config] * len(seeds), seeds))
    return [run_trial(config, s) for s in seeds]


# ---------- Gap sweeps ----------


def sample_instance(
    k: int,
    m: int,
    min_gap: float,
    rng: np.random.Generator,
    low: float | None = None,
    high: float | None = None,
) -> Instance:
    """
    Phase A: Constructive instance with gap exactly `min_gap`
    - pick a cut s uniformly so that [s, s + gap] fits in [low, high];
    - one top arm sits at s + gap, one bottom arm at s, the others are uniform above / below;
    - arm labels are shuffled.

    Phase B: Wide gaps
    - a gap larger than high - low cannot fit; the bounds then widen to [0, 1].
    """
    lo = settings.INSTANCE_LOW if low is None else low
    hi = settings.INSTANCE_HIGH if high is None else high
    if not 0.0 < min_gap <= 1.0:
        raise InvalidInputError(f"gap must lie in (0, 1], got {min_gap}")
    # hi - lo is rounded (0.95 - 0.05 < 0.9), compare with the loss tolerance
    if min_gap > hi - lo + settings.LOSS_TOLERANCE:
        lo, hi = 0.0, 1.0

    cut = float(rng.uniform(lo, max(lo, hi - min_gap)))
    top = [cut + min_gap, *rng.uniform(min(cut + min_gap, hi), hi, size=m - 1)]
    bottom = [cut, *rng.uniform(lo, cut, size=k - m - 1)]
    means = np.array(top + bottom, dtype=np.float64)
    means = np.clip(means[rng.permutation(k)], lo, hi)
    return Instance(p=tuple(float(v) for v in means), m=m)


def pareto_reference(deltas: Sequence[float], delta_query: float) -> float:
    """
    Reference shape 1 / (Delta_j * Delta_{j+1}) on the bracket (Delta_{j+1}, Delta_j]
    (Delta_J itself belongs to the last bracket); constants are dropped.
    """
    values = [float(d) for d in deltas]
    if len(values) < 2:
        raise InvalidInputError("a schedule needs at least two values")
    if not values[-1] <= delta_query <= values[0]:
        raise InvalidInputError(f"query {delta_query} outside [{values[-1]:.6g}, {values[0]:.6g}]")
    for j in range(len(values) - 1):
        if delta_query > values[j + 1]:
            return 1.0 / (values[j] * values[j + 1])
    return 1.0 / (values[-2] * values[-1])


@dataclass(frozen=True)
class SweepResult:
    """summary: one row per gap; trials: one row per (gap, instance, seed)."""

    summary: pd.DataFrame
    trials: pd.DataFrame
    deltas: tuple[float, ...]


SUMMARY_COLUMNS = ["delta", "mean_regret", "stderr", "reference", "collisions", "trials", "seed_base"]


def sweep(
    config: ExperimentConfig,
    gap_grid: Sequence[float],
    instances_per_gap: int,
    workers: int = 1,
) -> SweepResult:
    """
    Estimate R_{T,Delta} on every gap of the grid as the largest mean regret over every
    sampled instance whose gap is >= Delta (each instance run for config.trials seeds).
    Instances are sampled at each grid gap; a row pools its own and all wider-gap samples,
    so the estimate is non-increasing in Delta.
    """
    floor = config.horizon**-0.5
    if not gap_grid:
        raise InvalidInputError("gap grid is empty")
    if any(not floor - 1e-12 <= g <= 1.0 for g in gap_grid):
        raise InvalidInputError(f"every gap must lie in [T^(-1/2), 1] = [{floor:.6g}, 1]")
    if instances_per_gap < 1:
        raise InvalidInputError("instances_per_gap must be >= 1")

    # (gap, mean regret, stderr, collisions) per sampled instance
    pooled: list[tuple[float, float, float, int]] = []
    trial_rows = []
    for g_index, target in enumerate(gap_grid):
        rng = np.random.default_rng([config.shared_seed, 7919, g_index])
        for inst_index in range(instances_per_gap):
            instance = sample_instance(config.k, config.m, target, rng)
            run_config = config.model_copy(update={"means": instance.p})
            results = run_trials(run_config, workers=workers)
            regrets = np.array([r.final_regret for r in results])
            mean = float(regrets.mean())
            stderr = float(regrets.std(ddof=1) / math.sqrt(len(regrets))) if len(regrets) > 1 else 0.0
            pooled.append((float(target), mean, stderr, sum(r.collisions for r in results)))
            for r in results:
                trial_rows.append({"delta": target, "instance": inst_index, "means": instance.to_text(), **r.to_row()})
        logger.debug("gap {:.4g}: {} instances sampled", target, instances_per_gap)

    rows = []
    for target in gap_grid:
        eligible = [entry for entry in pooled if entry[0] >= target - settings.LOSS_TOLERANCE]
        _, best_mean, best_stderr, _ = max(eligible, key=lambda entry: entry[1])
        rows.append(
            {
                "delta": float(target),
                "mean_regret": best_mean,
                "stderr": best_stderr,
                "reference": pareto_reference(config.effective_deltas, min(max(target, floor), 1.0)),
                "collisions": int(sum(entry[3] for entry in eligible)),
                "trials": int(config.trials),
                "seed_base": int(config.private_seed_base),
            }
        )
        logger.info("gap {:.4g}: max mean regret {:.3f} over {} instances", target, best_mean, len(eligible))

    return SweepResult(
        summary=pd.DataFrame(rows, columns=SUMMARY_COLUMNS),
        trials=pd.DataFrame(trial_rows),
        deltas=config.effective_deltas,
    )
