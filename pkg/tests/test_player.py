from __future__ import annotations

import numpy as np
import pytest

from mpmab.errors import InvalidInputError, InvariantViolation
from mpmab.strategy.player import (
    UNSAMPLED_MEAN,
    PlayerState,
    act,
    naive_greedy_act,
    observe,
    observe_vector,
    warmup_arm,
)
from mpmab.strategy.schedule import Schedule, ScheduleConstants
from mpmab.tree.coloring import random_priority
from mpmab.tree.dop import p_star
from mpmab.tree.partition import PartitionParams


def _schedule(k: int = 3, warmup: int = 3) -> Schedule:
    return Schedule(
        deltas=(1.0, 0.01),
        phase_starts=(10, 100),
        delta_values=(0.012, 0.012),
        t0_warmup=warmup,
        k=k,
        horizon=1000,
        consts=ScheduleConstants(c_eps=0.01),
    )


def _state(player: int, k: int, m: int, means) -> PlayerState:
    state = PlayerState(player=player, k=k, m=m, rng=np.random.default_rng(player))
    state.n[:] = 10
    state.r[:] = np.asarray(means) * 10
    return state


def test_warmup_round_robin():
    assert warmup_arm(1, 1, 3) == 2
    assert warmup_arm(2, 1, 3) == 3
    assert warmup_arm(2, 2, 3) == 1
    # within one step the m < K players never share an arm
    for t in range(1, 20):
        assert len({warmup_arm(x, t, 5) for x in (1, 2, 3)}) == 3


def test_observe_updates_means():
    state = PlayerState(player=1, k=3, m=2, rng=np.random.default_rng(0))
    assert state.q.tolist() == [UNSAMPLED_MEAN] * 3
    observe(state, 1, 1)
    assert state.q[0] == 1.0
    observe(state, 1, 0)
    assert state.q[0] == 0.5
    assert state.n.tolist() == [2, 0, 0]


@pytest.mark.parametrize("arm,y", [(1, 2), (0, 1), (4, 0)])
def test_observe_rejects_bad_input(arm, y):
    state = PlayerState(player=1, k=3, m=2, rng=np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        observe(state, arm, y)


def test_observe_vector_counts_every_arm():
    state = PlayerState(player=1, k=3, m=2, rng=np.random.default_rng(0))
    observe_vector(state, (1, 0, 1))
    observe_vector(state, (1, 1, 0))
    assert state.n.tolist() == [2, 2, 2]
    assert state.q.tolist() == [1.0, 0.5, 0.5]
    with pytest.raises(InvalidInputError):
        observe_vector(state, (1, 0))


def test_player_index_is_validated():
    with pytest.raises(InvalidInputError):
        PlayerState(player=3, k=3, m=2, rng=np.random.default_rng(0))


def test_warmup_counts_every_arm_as_relevant():
    state = PlayerState(player=1, k=3, m=2, rng=np.random.default_rng(0))
    params = PartitionParams((0.3,) * 4, eps=1.0, delta=1.0)
    arms = [act(state, t, _schedule(), params, (1, 2, 3)) for t in (1, 2, 3)]
    assert arms == [2, 3, 1]
    assert state.relevant.tolist() == [3, 3, 3]
    assert state.last_vertex is None


def test_wide_gap_players_split_the_top_two():
    params = PartitionParams((0.3,) * 4, eps=1.0, delta=1.0)
    means = (0.9, 0.5, 0.2)
    for pi in [(1, 2, 3), (3, 1, 2), (2, 3, 1)]:
        players = [_state(x, 3, 2, means) for x in (1, 2)]
        arms = [act(s, 5, _schedule(), params, pi) for s in players]
        assert set(arms) == {1, 2}
        for s in players:
            assert s.last_vertex == p_star(means, 2)
            assert s.relevant.tolist() == [1, 1, 0]


def test_identical_estimates_never_collide(rng):
    k, m = 5, 3
    schedule = _schedule(k=k)
    for _ in range(100):
        params = PartitionParams.random(k, eps=1.0, delta=1.0, rng=rng)
        means = rng.random(k)
        pi = random_priority(k, rng)
        players = [_state(x, k, m, means) for x in range(1, m + 1)]
        arms = [act(s, 50, schedule, params, pi) for s in players]
        assert len(set(arms)) == m
        assert set(arms) <= set(players[0].last_vertex.relevant_arms)


def test_unsampled_arm_after_warmup_is_an_invariant_violation():
    state = PlayerState(player=1, k=3, m=2, rng=np.random.default_rng(0))
    observe(state, 1, 1)
    params = PartitionParams((0.3,) * 4, eps=1.0, delta=1.0)
    with pytest.raises(InvariantViolation):
        act(state, 5, _schedule(), params, (1, 2, 3))


def test_naive_greedy_plays_an_empirical_top_arm():
    state = _state(1, 4, 2, (0.9, 0.1, 0.8, 0.2))
    picks = {naive_greedy_act(state, 10 + i, _schedule(k=4)) for i in range(50)}
    assert picks == {1, 3}
    assert naive_greedy_act(state, 2, _schedule(k=4)) == warmup_arm(1, 2, 4)
