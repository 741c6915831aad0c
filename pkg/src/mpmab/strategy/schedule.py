from __future__ import annotations

import math
from bisect import bisect_right
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from mpmab.config.settings import settings
from mpmab.errors import InvalidInputError

# Multipliers of the analysed strategy; any horizon reachable on a desk is vacuous with them.
PAPER_EPS = 1e4
PAPER_T0 = 1e9
PAPER_TJ = 1e10


class ScheduleConstants(BaseModel):
    """
    Phase A: Schedule multipliers

    - paper_mode=True: eps_t = 1e4 * sqrt(K^3 log(KT) / t), T_0 = 1e9 K log(KT),
      t_j = ceil(1e10 K^3 log(KT) / Delta_j^2).
    - desk mode: eps_t = c_eps * sqrt(K log(KT) / t), T_0 = ceil(c_t0 K log(KT)),
      t_j = min{t : eps_t <= Delta_j / 10}.
    """

    model_config = ConfigDict(frozen=True)

    c_eps: float = Field(default_factory=lambda: settings.C_EPS, gt=0)
    c_t0: float = Field(default_factory=lambda: settings.C_T0, gt=0)
    paper_mode: bool = False


def _log_kt(k: int, horizon: int) -> float:
    return math.log(k * horizon)


def epsilon_t(t: int, k: int, horizon: int, consts: ScheduleConstants) -> float:
    if t < 1:
        raise InvalidInputError(f"t must be >= 1, got {t}")
    if consts.paper_mode:
        return PAPER_EPS * math.sqrt(k**3 * _log_kt(k, horizon) / t)
    return consts.c_eps * math.sqrt(k * _log_kt(k, horizon) / t)


def warmup_length(k: int, horizon: int, consts: ScheduleConstants) -> int:
    """T_0: number of initial round-robin steps."""
    multiplier = PAPER_T0 if consts.paper_mode else consts.c_t0
    return math.ceil(multiplier * k * _log_kt(k, horizon))


def _phase_start(gap: float, k: int, horizon: int, consts: ScheduleConstants) -> int:
    log_kt = _log_kt(k, horizon)
    if consts.paper_mode:
        return math.ceil(PAPER_TJ * k**3 * log_kt / gap**2)

    # closed form first, then walk to the exact minimum to absorb rounding
    target = gap / 10.0
    t = max(1, math.ceil(100.0 * consts.c_eps**2 * k * log_kt / gap**2))
    while epsilon_t(t, k, horizon, consts) > target:
        t += 1
    while t > 1 and epsilon_t(t - 1, k, horizon, consts) <= target:
        t -= 1
    return t


def normalize_schedule(deltas: Sequence[float]) -> tuple[float, ...]:
    """
    Make the gap schedule 2-separated (Delta_j >= 2 Delta_{j+1}) keeping both endpoints.

    Interior values are kept greedily from the top; values closer than a factor 2 to the
    last kept one are dropped, then trailing values too close to Delta_J are dropped.
    """
    values = [float(d) for d in deltas]
    if len(values) < 2:
        raise InvalidInputError("a schedule needs at least Delta_0 = 1 and Delta_J")
    if values[0] != 1.0:
        raise InvalidInputError(f"Delta_0 must be 1, got {values[0]}")
    if not all(0.0 < d <= 1.0 for d in values):
        raise InvalidInputError("schedule values must lie in (0, 1]")
    if any(a <= b for a, b in zip(values, values[1:])):
        raise InvalidInputError(f"schedule must be strictly decreasing, got {tuple(values)}")

    last = values[-1]
    kept = [values[0]]
    for d in values[1:-1]:
        if kept[-1] >= 2.0 * d:
            kept.append(d)
    while len(kept) > 1 and kept[-1] < 2.0 * last:
        kept.pop()
    if kept[-1] < 2.0 * last:
        raise InvalidInputError(f"Delta_J = {last} is above 1/2, no 2-separated schedule ends there")
    kept.append(last)
    return tuple(kept)


@dataclass(frozen=True)
class Schedule:
    """
    Phase A: Everything time-dependent the players share

    - deltas: normalized gap schedule Delta_0 = 1 > ... > Delta_J.
    - phase_starts: t_0 < t_1 < ... < t_J.
    - delta_values: delta_{t_j}, drawn in [eps_{t_j}, 1.5 eps_{t_j}]; constant within a phase.
    - t0_warmup: T_0.
    """

    deltas: tuple[float, ...]
    phase_starts: tuple[int, ...]
    delta_values: tuple[float, ...]
    t0_warmup: int
    k: int
    horizon: int
    consts: ScheduleConstants

    def epsilon(self, t: int) -> float:
        return epsilon_t(t, self.k, self.horizon, self.consts)

    def phase_index(self, t: int) -> int:
        # steps before t_0 use the first phase's delta
        return max(0, bisect_right(self.phase_starts, t) - 1)

    def delta(self, t: int) -> float:
        return self.delta_values[self.phase_index(t)]

    @property
    def vacuous_phases(self) -> tuple[int, ...]:
        """Indices j with t_j > T: those phases never start within the horizon."""
        return tuple(j for j, start in enumerate(self.phase_starts) if start > self.horizon)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "j": range(len(self.deltas)),
                "delta_j": self.deltas,
                "t_j": self.phase_starts,
                "eps_t_j": [self.epsilon(t) for t in self.phase_starts],
                "delta_t_j": self.delta_values,
                "vacuous": [t > self.horizon for t in self.phase_starts],
            }
        )


def phase_times(
    deltas: Sequence[float],
    k: int,
    horizon: int,
    consts: ScheduleConstants,
    shared_rng: np.random.Generator,
) -> Schedule:
    normalized = normalize_schedule(deltas)
    starts = tuple(_phase_start(d, k, horizon, consts) for d in normalized)
    delta_values = []
    for start in starts:
        eps = epsilon_t(start, k, horizon, consts)
        delta_values.append(float(shared_rng.uniform(eps, 1.5 * eps)))

    schedule = Schedule(
        deltas=normalized,
        phase_starts=starts,
        delta_values=tuple(delta_values),
        t0_warmup=warmup_length(k, horizon, consts),
        k=k,
        horizon=horizon,
        consts=consts,
    )
    if schedule.vacuous_phases:
        logger.debug("phases {} start after T={}", schedule.vacuous_phases, horizon)
    logger.debug("schedule T0={} t_j={}", schedule.t0_warmup, starts)
    return schedule
