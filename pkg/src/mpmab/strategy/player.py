from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from mpmab.errors import InvalidInputError, InvariantViolation
from mpmab.strategy.schedule import Schedule
from mpmab.tree.coloring import SlotAssignment, color
from mpmab.tree.dop import Dop, ranking
from mpmab.tree.partition import PartitionParams, partition_map

# Estimate reported for an arm that has never been pulled; the warm-up makes it unreachable after t > K.
UNSAMPLED_MEAN = 0.5


@dataclass
class PlayerState:
    """
    Phase A: What one player knows

    - player: the player's index X in 1..m; m players share K arms.
    - n[i-1], r[i-1]: pulls of arm i and observed reward sum on it.
    - relevant[i-1]: N(i), the number of past steps at which arm i was in A u B of the
      vertex this player visited (every arm counts during warm-up).
    - last_vertex: vertex visited at the most recent post-warm-up step.
    - rng: the player's private stream (only the naive foil draws from it).
    """

    player: int
    k: int
    m: int
    rng: np.random.Generator
    n: np.ndarray = field(init=False, repr=False)
    r: np.ndarray = field(init=False, repr=False)
    relevant: np.ndarray = field(init=False, repr=False)
    last_vertex: Dop | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.player <= self.m < self.k:
            raise InvalidInputError(f"need 1 <= player <= m < k, got player={self.player}, m={self.m}, k={self.k}")
        self.n = np.zeros(self.k, dtype=np.int64)
        self.r = np.zeros(self.k, dtype=np.float64)
        self.relevant = np.zeros(self.k, dtype=np.int64)

    @property
    def q(self) -> np.ndarray:
        """Empirical means r/n; UNSAMPLED_MEAN where n == 0."""
        out = np.full(self.k, UNSAMPLED_MEAN)
        seen = self.n > 0
        out[seen] = self.r[seen] / self.n[seen]
        return out


def warmup_arm(player: int, t: int, k: int) -> int:
    """Round robin: player X plays arm X + t (mod K), numbered 1..K."""
    return (player + t - 1) % k + 1


def _require_sampled(state: PlayerState, t: int) -> None:
    if not np.all(state.n > 0):
        missing = [int(i) + 1 for i in np.flatnonzero(state.n == 0)]
        raise InvariantViolation(f"player {state.player} has never pulled arms {missing} at t={t}")


def act(
    state: PlayerState,
    t: int,
    schedule: Schedule,
    c: PartitionParams,
    pi_t: Sequence[int],
    cache: dict[Dop, SlotAssignment] | None = None,
) -> int:
    """
    Choose the arm player X pulls at time t.

    - t <= T_0: round robin, every arm counted as relevant.
    - t > T_0: locate q in the partition with (c, eps_t, delta_t), then play slot X of
      the pi_t-colouring of that vertex; A u B of the vertex is counted as relevant.
      Only c and early_exit are read from `c`; eps and delta come from the schedule.
    """
    if t <= schedule.t0_warmup:
        state.relevant += 1
        return warmup_arm(state.player, t, state.k)

    _require_sampled(state, t)
    params = c.with_scale(schedule.epsilon(t), schedule.delta(t))
    # every arm is sampled here, so r / n is q without the UNSAMPLED_MEAN fill
    vertex = partition_map((state.r / state.n).tolist(), params, state.m)
    state.relevant[[a - 1 for a in vertex.relevant_arms]] += 1
    state.last_vertex = vertex
    return color(vertex, pi_t, cache).slot(state.player)


def naive_greedy_act(state: PlayerState, t: int, schedule: Schedule) -> int:
    """Collision-prone foil: after warm-up, a private-random arm among the empirical top m."""
    if t <= schedule.t0_warmup:
        state.relevant += 1
        return warmup_arm(state.player, t, state.k)
    _require_sampled(state, t)
    top = ranking(state.q.tolist())[: state.m]
    state.relevant[[a - 1 for a in top]] += 1
    return top[int(state.rng.integers(state.m))]


def observe(state: PlayerState, arm: int, y: int) -> PlayerState:
    if y not in (0, 1):
        raise InvalidInputError(f"observations are bits, got {y}")
    if not 1 <= arm <= state.k:
        raise InvalidInputError(f"arm must lie in 1..{state.k}, got {arm}")
    state.n[arm - 1] += 1
    state.r[arm - 1] += y
    return state


def observe_vector(state: PlayerState, ys: Sequence[int]) -> PlayerState:
    """Full-information feedback: one fresh bit for every arm."""
    bits = np.asarray(ys, dtype=np.int64)
    if bits.shape != (state.k,) or np.any((bits != 0) & (bits != 1)):
        raise InvalidInputError(f"expected {state.k} bits, got {ys!r}")
    state.n += 1
    state.r += bits
    return state
