from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from mpmab.errors import InvalidInputError, InvariantViolation, PartitionContractError
from mpmab.tree.dop import Block, Dop, p_star, ranking, root


@dataclass(frozen=True)
class PartitionParams:
    """
    Phase A: Parameters (c, eps, delta) of the partition map

    - c: c[d] is the large-cut multiplier used at every vertex of depth d, d = 0..K.
      Each entry lies in [0, 1/K]; this is what guarantees a large cut exists.
    - eps: half the skeleton width unit (skeleton bands are (d+1)*6*eps wide).
    - delta: blue-region threshold; the map returns P_*(x) when its gap is >= delta + eps.
    - early_exit: False switches the blue line and its padding layer off, leaving
      the plain skeleton partition (the single-phase baseline).
    """

    c: tuple[float, ...]
    eps: float
    delta: float
    early_exit: bool = True

    def __post_init__(self) -> None:
        k = len(self.c) - 1
        if k < 2:
            raise InvalidInputError(f"c must hold K+1 >= 3 values, got {len(self.c)}")
        bound = 1.0 / k
        if any(not (0.0 <= v <= bound) for v in self.c):
            raise InvalidInputError(f"every c value must lie in [0, 1/K] = [0, {bound:.6g}]")
        _check_scales(self.eps, self.delta)

    @property
    def k(self) -> int:
        return len(self.c) - 1

    @classmethod
    def random(
        cls, k: int, eps: float, delta: float, rng: np.random.Generator, early_exit: bool = True
    ) -> PartitionParams:
        """c(0), ..., c(K) i.i.d. uniform on [0, 1/K], drawn once from shared randomness."""
        c = tuple(float(v) for v in rng.uniform(0.0, 1.0 / k, size=k + 1))
        return cls(c=c, eps=eps, delta=delta, early_exit=early_exit)

    def with_scale(self, eps: float, delta: float) -> PartitionParams:
        """Same c at new scales; called every step, so only eps and delta are re-checked."""
        _check_scales(eps, delta)
        scaled = object.__new__(PartitionParams)
        object.__setattr__(scaled, "c", self.c)
        object.__setattr__(scaled, "eps", eps)
        object.__setattr__(scaled, "delta", delta)
        object.__setattr__(scaled, "early_exit", self.early_exit)
        return scaled


def _check_scales(eps: float, delta: float) -> None:
    for name, value in (("eps", eps), ("delta", delta)):
        if not (math.isfinite(value) and value > 0):
            raise InvalidInputError(f"{name} must be finite and positive, got {value}")


class TraceStep(NamedTuple):
    """One decision of the partition map: line id, vertex involved, quantity that decided it."""

    line: str
    vertex: Dop
    quantity: float


def _checked(x: Sequence[float], params: PartitionParams) -> list[float]:
    values = [float(v) for v in x]
    if len(values) != params.k:
        raise InvalidInputError(f"x has {len(values)} coordinates but params are for K={params.k}")
    if any(not (0.0 <= v <= 1.0) for v in values):
        raise InvalidInputError("every coordinate of x must lie in [0, 1]")
    return values


def _sorted_b(node: Dop, order: list[int]) -> list[int]:
    members = set(node.b_arms)
    return [a for a in order if a in members]


def _prefix_gaps(b_sorted: list[int], values: list[float]) -> tuple[list[float], float]:
    # gap of the j-th sorted-prefix child is the drop between the j-th and (j+1)-th values
    vals = [values[a - 1] for a in b_sorted]
    return [vals[j] - vals[j + 1] for j in range(len(vals) - 1)], vals[0] - vals[-1]


def _split_at(node: Dop, b_sorted: list[int], j: int) -> Dop:
    upper: Block = tuple(sorted(b_sorted[:j]))
    lower: Block = tuple(sorted(b_sorted[j:]))
    return node.split(upper, lower)


def large_cut_child(p: Dop, x: Sequence[float], threshold: float) -> Dop | None:
    """First sorted-prefix child of p whose gap is >= threshold; None when no child qualifies."""
    if p.is_leaf:
        raise InvalidInputError(f"{p} is a leaf and has no children")
    values = [float(v) for v in x]
    b_sorted = _sorted_b(p, ranking(values))
    gaps, _ = _prefix_gaps(b_sorted, values)
    for j, g in enumerate(gaps, start=1):
        if g >= threshold:
            return _split_at(p, b_sorted, j)
    return None


def partition_map(
    x: Sequence[float],
    params: PartitionParams,
    m: int,
    trace: list[TraceStep] | None = None,
) -> Dop:
    """
    Map a point x of [0,1]^K to a vertex of T_{K,m}.

    Phase A: blue line. If the cut between the top m values and the rest is at least
             delta + eps, return P_*(x) at once.
    Phase B: descend from ROOT. At every non-leaf P:
             - padding: return P if that same cut is >= delta - (depth(P) + 2) * eps;
             - skeleton: return P if some vertex Q on the path (ROOT first, P last) has a
               sorted-prefix child whose gap is within (d(P,Q) + 1) * 6 * eps of
               c(depth Q) * range_Q(x);
             - otherwise step to the first sorted-prefix child with gap >= c(depth P) * range_P(x).
    Phase C: a leaf is returned as is.

    Boundaries are non-strict. When `trace` is a list, every decision is appended to it.
    """
    values = _checked(x, params)
    k = len(values)
    order = ranking(values)
    star_gap = values[order[m - 1] - 1] - values[order[m] - 1]
    eps, delta = params.eps, params.delta

    if params.early_exit and star_gap >= delta + eps:
        star = p_star(values, m)
        if trace is not None:
            trace.append(TraceStep("blue", star, star_gap))
        return _checked_output(star, values)

    node = root(k, m)
    descents = 0
    # (depth of Q, min_j |gap(Q_j) - c(depth Q) * range_Q|) for every Q on the path so far
    deviations: list[tuple[int, float]] = []
    while not node.is_leaf:
        depth = node.depth
        if params.early_exit and star_gap >= delta - (depth + 2) * eps:
            if trace is not None:
                trace.append(TraceStep("padding", node, star_gap))
            return _checked_output(node, values, descents)

        b_sorted = _sorted_b(node, order)
        gaps, spread = _prefix_gaps(b_sorted, values)
        threshold = params.c[depth] * spread
        deviations.append((depth, min(abs(g - threshold) for g in gaps)))

        for q_depth, deviation in deviations:
            if deviation <= (depth - q_depth + 1) * 6.0 * eps:
                if trace is not None:
                    trace.append(TraceStep("skeleton", node, deviation))
                return _checked_output(node, values, descents)

        j = next((j for j, g in enumerate(gaps, start=1) if g >= threshold), None)
        if j is None:
            raise PartitionContractError(
                f"no child of {node} has gap >= {threshold:.6g} (c={params.c[depth]:.6g})"
            )
        node = _split_at(node, b_sorted, j)
        descents += 1
        if trace is not None:
            trace.append(TraceStep("descend", node, gaps[j - 1]))

    if trace is not None:
        trace.append(TraceStep("leaf", node, gaps[j - 1]))
    return _checked_output(node, values, descents)


def _checked_output(node: Dop, values: list[float], descents: int | None = None) -> Dop:
    # the output sits at depth == descents and x respects every inequality it states
    if descents is not None and node.depth != descents:
        raise InvariantViolation(f"partition output {node} is off the descent path")
    for upper, lower in zip(node.blocks, node.blocks[1:]):
        if min(values[a - 1] for a in upper) < max(values[a - 1] for a in lower):
            raise InvariantViolation(f"partition output {node} contradicts the order of x")
    return node


def single_phase_params(params: PartitionParams) -> PartitionParams:
    """The same (c, eps, delta) with the blue line and padding layer switched off."""
    return replace(params, early_exit=False)
