from __future__ import annotations

import numpy as np
import pytest

from mpmab.errors import InvalidInputError, InvariantViolation
from mpmab.tree import partition
from mpmab.tree.dop import (
    Dop,
    ancestors,
    child_toward,
    gap_of,
    p_star,
    parse_dop,
    range_of,
    ranking,
    root,
    tree_distance,
)
from mpmab.tree.partition import (
    PartitionParams,
    TraceStep,
    large_cut_child,
    partition_map,
    single_phase_params,
)

C3 = (0.3, 0.3, 0.3, 0.3)


def _prefix_children(q: Dop, x) -> list[Dop]:
    members = set(q.b_arms)
    b = [a for a in ranking(x) if a in members]
    return [q.split(tuple(sorted(b[:j])), tuple(sorted(b[j:]))) for j in range(1, len(b))]


def reference_map(x, params: PartitionParams, m: int) -> Dop:
    """Line-by-line transcription of the mapping, recomputing every quantity from scratch."""
    k = len(x)
    star = p_star(x, m)
    star_gap = gap_of(star, x)
    if params.early_exit and star_gap >= params.delta + params.eps:
        return star
    top = root(k, m)
    node = top
    while True:
        if node.is_leaf:
            return node
        if params.early_exit and star_gap >= params.delta - (tree_distance(node, top) + 2) * params.eps:
            return node
        for q in ancestors(node):
            width = (tree_distance(node, q) + 1) * 6 * params.eps
            target = params.c[q.depth] * range_of(q, x)
            if any(abs(gap_of(child, x) - target) <= width for child in _prefix_children(q, x)):
                return node
        threshold = params.c[node.depth] * range_of(node, x)
        node = next(child for child in _prefix_children(node, x) if gap_of(child, x) >= threshold)


# ---------- golden traces ----------


def test_wide_gap_exits_at_p_star():
    trace: list[TraceStep] = []
    out = partition_map((0.9, 0.5, 0.2), PartitionParams(C3, eps=0.01, delta=0.012), m=2, trace=trace)
    assert str(out) == "[{1,2}>_1{3}]"
    assert [(s.line, str(s.vertex)) for s in trace] == [("blue", "[{1,2}>_1{3}]")]
    assert trace[0].quantity == pytest.approx(0.3)


def test_flat_point_pads_at_root():
    trace: list[TraceStep] = []
    out = partition_map((0.5, 0.5, 0.5), PartitionParams(C3, eps=0.01, delta=0.012), m=2, trace=trace)
    assert out == root(3, 2)
    assert [(s.line, str(s.vertex), s.quantity) for s in trace] == [("padding", "[{1,2,3}]", 0.0)]


def test_root_skeleton_traps_first_descent():
    trace: list[TraceStep] = []
    out = partition_map((0.8, 0.3, 0.25), PartitionParams(C3, eps=0.01, delta=0.1), m=2, trace=trace)
    assert str(out) == "[{1}>_1{2,3}]"
    assert [(s.line, str(s.vertex)) for s in trace] == [
        ("descend", "[{1}>_1{2,3}]"),
        ("skeleton", "[{1}>_1{2,3}]"),
    ]
    assert trace[0].quantity == pytest.approx(0.5)
    assert trace[1].quantity == pytest.approx(0.115)


@pytest.mark.parametrize(
    "x,eps,delta",
    [((0.9, 0.5, 0.2), 0.01, 0.012), ((0.5, 0.5, 0.5), 0.01, 0.012), ((0.8, 0.3, 0.25), 0.01, 0.1)],
)
def test_golden_cases_agree_with_reference(x, eps, delta):
    params = PartitionParams(C3, eps=eps, delta=delta)
    assert partition_map(x, params, 2) == reference_map(x, params, 2)


@pytest.mark.parametrize("k,m", [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3), (6, 3)])
@pytest.mark.parametrize("early_exit", [True, False])
def test_optimized_map_matches_reference(k, m, early_exit, rng):
    for _ in range(150):
        eps = float(rng.choice([1e-3, 5e-3, 2e-2, 5e-2]))
        params = PartitionParams.random(k, eps=eps, delta=eps * rng.uniform(1.0, 1.5), rng=rng, early_exit=early_exit)
        x = rng.random(k)
        assert partition_map(x, params, m) == reference_map(x, params, m)


# ---------- large_cut_child ----------


def test_large_cut_child_examples():
    r = root(3, 2)
    assert str(large_cut_child(r, (0.8, 0.3, 0.25), 0.165)) == "[{1}>_1{2,3}]"
    assert str(large_cut_child(r, (0.2, 0.7, 0.4), 0.0)) == "[{2}>_1{1,3}]"
    assert str(large_cut_child(r, (0.4, 0.4, 0.4), 0.0)) == "[{1}>_1{2,3}]"
    assert large_cut_child(r, (0.8, 0.3, 0.25), 0.6) is None


def test_large_cut_child_rejects_leaf():
    with pytest.raises(InvalidInputError):
        large_cut_child(parse_dop("[{1,2}>_1{3}]", m=2), (0.8, 0.3, 0.25), 0.0)


# ---------- parameter and input validation ----------


@pytest.mark.parametrize(
    "c,eps,delta",
    [
        ((0.3, 0.3, 0.4, 0.3), 0.01, 0.01),
        ((0.3, -0.1, 0.3, 0.3), 0.01, 0.01),
        ((0.3, 0.3), 0.01, 0.01),
        (C3, 0.0, 0.01),
        (C3, 0.01, float("nan")),
        (C3, float("inf"), 0.01),
    ],
)
def test_params_are_validated(c, eps, delta):
    with pytest.raises(InvalidInputError):
        PartitionParams(c, eps=eps, delta=delta)


def test_with_scale_keeps_c_and_checks_the_scales():
    base = PartitionParams(C3, eps=1.0, delta=1.0, early_exit=False)
    scaled = base.with_scale(0.01, 0.012)
    assert scaled == PartitionParams(C3, eps=0.01, delta=0.012, early_exit=False)
    assert hash(scaled) == hash(PartitionParams(C3, eps=0.01, delta=0.012, early_exit=False))
    with pytest.raises(InvalidInputError):
        base.with_scale(0.0, 0.01)
    with pytest.raises(InvalidInputError):
        base.with_scale(0.01, float("nan"))


def test_output_contradicting_the_order_of_x_is_caught(monkeypatch):
    def reversed_split(node, b_sorted, j):
        return node.split(tuple(sorted(b_sorted[j:])), tuple(sorted(b_sorted[:j])))

    params = PartitionParams(C3, eps=1e-6, delta=1.0)
    assert partition_map((0.9, 0.5, 0.1), params, m=2).depth == 2
    monkeypatch.setattr(partition, "_split_at", reversed_split)
    with pytest.raises(InvariantViolation, match="contradicts the order"):
        partition_map((0.9, 0.5, 0.1), params, m=2)


@pytest.mark.parametrize("x", [(0.5, 1.2, 0.1), (-0.1, 0.5, 0.2), (0.5, 0.5)])
def test_points_outside_the_cube_are_rejected(x):
    with pytest.raises(InvalidInputError):
        partition_map(x, PartitionParams(C3, eps=0.01, delta=0.01), m=2)


def test_single_phase_params_switch_off_early_exit():
    params = single_phase_params(PartitionParams(C3, eps=0.01, delta=0.012))
    assert not params.early_exit
    # without the blue line the wide-gap point descends instead of exiting at once
    trace: list[TraceStep] = []
    partition_map((0.9, 0.5, 0.2), params, m=2, trace=trace)
    assert trace[0].line != "blue"


def test_random_c_respects_bounds(rng):
    params = PartitionParams.random(5, eps=0.01, delta=0.01, rng=rng)
    assert len(params.c) == 6
    assert all(0.0 <= v <= 0.2 for v in params.c)


# ---------- structure of the output ----------


@pytest.mark.parametrize("k,m", [(4, 2), (5, 3)])
def test_output_is_root_star_or_on_descent_path(k, m, rng):
    for _ in range(200):
        eps = float(rng.uniform(1e-3, 5e-2))
        params = PartitionParams.random(k, eps=eps, delta=eps * 1.2, rng=rng)
        x = rng.random(k)
        out = partition_map(x, params, m)
        if out == p_star(x, m) or out.is_root:
            continue
        # every vertex on the way down is the first large-cut child of its parent
        chain = ancestors(out)[::-1]
        for up, down in zip(chain, chain[1:]):
            assert large_cut_child(up, x, params.c[up.depth] * range_of(up, x)) == down


def test_tiny_scales_reproduce_the_sorted_order(rng):
    k, m = 5, 2
    leaves = 0
    for _ in range(300):
        params = PartitionParams.random(k, eps=1e-9, delta=1e-9, rng=rng, early_exit=False)
        x = rng.random(k)
        out = partition_map(x, params, m)
        if not out.is_leaf:
            continue  # skeleton hit
        leaves += 1
        for upper, lower in zip(out.blocks, out.blocks[1:]):
            assert min(x[a - 1] for a in upper) >= max(x[a - 1] for a in lower)
    assert leaves >= 280


# ---------- neighbourhood structure ----------


def _adjacency_violations(k: int, m: int, trials: int, rng: np.random.Generator) -> int:
    bad = 0
    for _ in range(trials):
        eps = float(rng.choice([2e-3, 1e-2, 3e-2, 8e-2]))
        params = PartitionParams.random(k, eps=eps, delta=eps * rng.uniform(1.0, 1.5), rng=rng)
        x = rng.random(k)
        y = np.clip(x + rng.uniform(-eps / 2, eps / 2, size=k), 0.0, 1.0)
        if tree_distance(partition_map(x, params, m), partition_map(y, params, m)) > 1:
            bad += 1
    return bad


def _split_violations(k: int, m: int, trials: int, rng: np.random.Generator) -> int:
    """Move only arms outside A(P) u B(P) freely and the rest by <= eps/2; check the branch below P."""
    bad = 0
    for _ in range(trials):
        eps = float(rng.choice([2e-3, 1e-2, 3e-2, 8e-2]))
        delta = eps * rng.uniform(1.0, 1.5)
        params = PartitionParams.random(k, eps=eps, delta=delta, rng=rng)
        x = rng.random(k)
        px = partition_map(x, params, m)
        p = ancestors(px)[int(rng.integers(len(ancestors(px))))]
        kept = set(p.relevant_arms)
        y = x.copy()
        for a in range(1, k + 1):
            if a in kept:
                y[a - 1] = np.clip(x[a - 1] + rng.uniform(-eps / 2, eps / 2), 0.0, 1.0)
            else:
                y[a - 1] = rng.random()
        eps_y = eps * float(rng.uniform(0.05, 1.0))
        py = partition_map(y, params.with_scale(eps_y, delta), m)
        cx, cy = child_toward(p, px), child_toward(p, py)
        if cx is not None and cy is not None and cx != cy:
            bad += 1
    return bad


@pytest.mark.parametrize("k,m", [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3)])
def test_close_points_land_on_adjacent_vertices(k, m, rng):
    assert _adjacency_violations(k, m, 1500, rng) == 0


@pytest.mark.parametrize("k,m", [(3, 2), (4, 2), (5, 3)])
def test_close_points_never_split_below_a_common_vertex(k, m, rng):
    assert _split_violations(k, m, 1000, rng) == 0


@pytest.mark.slow
@pytest.mark.parametrize("k,m", [(3, 2), (4, 2), (4, 3), (5, 2), (5, 3)])
def test_close_points_land_on_adjacent_vertices_full(k, m, rng):
    assert _adjacency_violations(k, m, 100_000, rng) == 0


@pytest.mark.slow
@pytest.mark.parametrize("k,m", [(3, 2), (4, 3), (5, 2)])
def test_close_points_never_split_below_a_common_vertex_full(k, m, rng):
    assert _split_violations(k, m, 10_000, rng) == 0
