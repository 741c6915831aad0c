from __future__ import annotations

import math

import pytest

from mpmab.errors import InvalidInputError
from mpmab.tree.coloring import (
    ColoringMemo,
    SlotAssignment,
    color,
    inclusion_frequencies,
    random_priority,
    verify_collision_robust,
)
from mpmab.tree.dop import Dop, feas, parent, parse_dop, root, walk_tree

SMALL_TREES = [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3)]


def test_root_takes_highest_priorities():
    assert color(root(3, 2), (1, 2, 3)).arms == (1, 2)
    assert color(root(5, 3), (4, 2, 5, 1, 3)).arms == (4, 2, 5)


def test_forced_arm_replaces_the_dropped_slot():
    p = parse_dop("[{3}>_1{1,2}]", m=2)
    assert color(p, (1, 2, 3)).arms == (1, 3)


def test_priority_must_be_a_permutation():
    with pytest.raises(InvalidInputError):
        color(root(3, 2), (1, 1, 2))


@pytest.mark.parametrize("k,m", SMALL_TREES)
def test_colour_sets_are_feasible(k, m, rng):
    for _ in range(10):
        pi = random_priority(k, rng)
        for v in walk_tree(k, m):
            slots = color(v, pi)
            assert len(set(slots.arms)) == m
            assert slots.arm_set in feas(v)
            assert set(v.a_arms) <= slots.arm_set


@pytest.mark.parametrize("k,m", SMALL_TREES)
def test_shared_arms_keep_their_slot(k, m, rng):
    for _ in range(10):
        pi = random_priority(k, rng)
        for v in walk_tree(k, m):
            up = parent(v)
            if up is None:
                continue
            mine, theirs = color(v, pi).arms, color(up, pi).arms
            for a in set(mine) & set(theirs):
                assert mine.index(a) == theirs.index(a)


@pytest.mark.parametrize("k,m", SMALL_TREES)
def test_colouring_is_collision_robust(k, m, rng):
    for _ in range(20):
        assert verify_collision_robust(k, m, random_priority(k, rng))


@pytest.mark.slow
@pytest.mark.parametrize("k,m", SMALL_TREES)
def test_colouring_is_collision_robust_full(k, m, rng):
    for _ in range(100):
        assert verify_collision_robust(k, m, random_priority(k, rng))


def test_broken_colouring_is_detected():
    victim = parse_dop("[{1}>_1{2,3}]", m=2)

    def broken(node: Dop, pi: tuple[int, ...]) -> SlotAssignment:
        slots = color(node, pi)
        return SlotAssignment(slots.arms[::-1]) if node == victim else slots

    pi = (1, 2, 3)
    assert verify_collision_robust(3, 2, pi)
    assert not verify_collision_robust(3, 2, pi, coloring=broken)


def test_shared_cache_gives_the_same_answer(rng):
    pi = random_priority(5, rng)
    cache: dict = {}
    for v in walk_tree(5, 3):
        assert color(v, pi, cache) == color(v, pi)
    assert len(cache) > 1


def test_memo_keeps_priority_orders_apart(rng):
    memo = ColoringMemo()
    vertices = list(walk_tree(4, 2))
    orders = [random_priority(4, rng) for _ in range(30)]
    # visit the same vertices under interleaved orders, as a trial does step after step
    for _ in range(2):
        for pi in orders:
            for v in vertices[::3]:
                assert color(v, pi, memo.for_order(pi)) == color(v, pi)
    assert memo.for_order(orders[0]) is memo.for_order(list(orders[0]))
    assert len(memo) <= 24 * len(vertices)


def test_max_depth_limits_the_walk(rng):
    assert verify_collision_robust(5, 2, random_priority(5, rng), max_depth=1)


@pytest.mark.parametrize("k,m", [(4, 2), (5, 3)])
def test_every_b_arm_is_included_often_enough(k, m, rng):
    samples = 600
    floor = 1.0 / k - 3.0 * math.sqrt((1.0 / k) * (1.0 - 1.0 / k) / samples)
    for v in walk_tree(k, m):
        if v.is_leaf:
            continue
        freqs = inclusion_frequencies(v, k, samples, rng)
        assert set(freqs) == set(v.b_arms)
        assert min(freqs.values()) >= floor
