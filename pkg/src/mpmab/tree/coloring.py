from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from mpmab.errors import InvalidInputError
from mpmab.tree.dop import Dop, ancestors, parent, walk_tree

Priority = tuple[int, ...]


@dataclass(frozen=True)
class SlotAssignment:
    """arms[i] is the arm played by player slot i + 1; entries are distinct."""

    arms: tuple[int, ...]

    def slot(self, player: int) -> int:
        return self.arms[player - 1]

    @property
    def arm_set(self) -> frozenset[int]:
        return frozenset(self.arms)


ColoringFn = Callable[[Dop, Priority], SlotAssignment]


def random_priority(k: int, rng: np.random.Generator) -> Priority:
    """A uniformly random permutation of 1..k, read as a priority order (first = highest)."""
    return tuple(int(a) + 1 for a in rng.permutation(k))


def _check_priority(pi: Sequence[int], k: int) -> None:
    if sorted(pi) != list(range(1, k + 1)):
        raise InvalidInputError(f"pi must be a permutation of 1..{k}, got {tuple(pi)}")


def _inherit(parent_arms: tuple[int, ...], child: Dop, rank: dict[int, int]) -> tuple[int, ...]:
    a_set = set(child.a_arms)
    b_set = set(child.b_arms)
    quota = child.m - len(a_set)

    kept_b = sorted((a for a in parent_arms if a in b_set), key=rank.__getitem__)[:quota]
    keep = a_set.union(kept_b)
    slots: list[int | None] = [a if a in keep else None for a in parent_arms]

    missing_a = [a for a in a_set if a not in parent_arms]
    fill_b = sorted((a for a in b_set if a not in keep), key=rank.__getitem__)[: quota - len(kept_b)]
    incoming = iter(sorted(missing_a + fill_b, key=rank.__getitem__))

    # freed slots are refilled lowest index first, incoming arms in priority order
    return tuple(a if a is not None else next(incoming) for a in slots)


def color(p: Dop, pi: Sequence[int], cache: dict[Dop, SlotAssignment] | None = None) -> SlotAssignment:
    """
    Phase A: Collision-robust slot assignment F(P) under the priority order pi

    - ROOT: slot i gets the i-th arm of pi.
    - child of P: arms of F(P) that stay eligible keep their slot (every arm of A(child),
      and arms of B(child) up to the quota m - |A(child)|, highest priority first);
      missing A(child) arms and quota-filling B(child) arms go to the freed slots.

    Phase B: Caching
    - `cache` holds assignments for this one pi only. It may be shared by every player
      and kept across steps that draw the same pi; ColoringMemo keeps one per pi.
    """
    if cache is not None and p in cache:
        return cache[p]

    chain = ancestors(p)[::-1]
    start = 0
    arms: tuple[int, ...] | None = None
    if cache is not None:
        for idx in range(len(chain) - 1, -1, -1):
            if chain[idx] in cache:
                start, arms = idx, cache[chain[idx]].arms
                break

    rank = {a: i for i, a in enumerate(pi)}
    if arms is None:
        _check_priority(pi, p.k)
        arms = tuple(pi[: p.m])
        if cache is not None:
            cache[chain[0]] = SlotAssignment(arms)

    for node in chain[start + 1 :]:
        arms = _inherit(arms, node, rank)
        if cache is not None:
            cache[node] = SlotAssignment(arms)
    return SlotAssignment(arms)


class ColoringMemo:
    """Slot assignments memoized per (pi, vertex) for the lifetime of one trial."""

    def __init__(self) -> None:
        self._by_order: dict[Priority, dict[Dop, SlotAssignment]] = {}

    def for_order(self, pi: Sequence[int]) -> dict[Dop, SlotAssignment]:
        return self._by_order.setdefault(tuple(pi), {})

    def __len__(self) -> int:
        return sum(len(cache) for cache in self._by_order.values())


def verify_collision_robust(
    k: int,
    m: int,
    pi: Sequence[int],
    max_depth: int | None = None,
    coloring: ColoringFn | None = None,
) -> bool:
    """
    Exhaustively check F(P)[i] != F(Q)[j] for all i != j over every vertex P (within
    max_depth) and every Q at tree distance <= 1 from it. Adjacent pairs are exactly
    (vertex, parent), so each edge is examined once.
    """
    colorer: ColoringFn = coloring or (lambda node, order: color(node, order))
    for node in walk_tree(k, m, max_depth):
        mine = colorer(node, tuple(pi)).arms
        if len(set(mine)) != len(mine):
            return False
        up = parent(node)
        if up is None:
            continue
        theirs = colorer(up, tuple(pi)).arms
        for i, a in enumerate(mine):
            for j, b in enumerate(theirs):
                if i != j and a == b:
                    return False
    return True


def inclusion_frequencies(p: Dop, k: int, samples: int, rng: np.random.Generator) -> dict[int, float]:
    """Fraction of uniform random pi for which each arm of B(p) appears in color(p, pi)."""
    hits = dict.fromkeys(p.b_arms, 0)
    for _ in range(samples):
        chosen = color(p, random_priority(k, rng)).arm_set
        for a in hits:
            hits[a] += a in chosen
    return {a: count / samples for a, count in hits.items()}
