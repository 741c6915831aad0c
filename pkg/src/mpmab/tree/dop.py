from __future__ import annotations

import re
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from itertools import combinations

from mpmab.errors import InvalidDopError

Block = tuple[int, ...]


@dataclass(frozen=True)
class ArmSetPair:
    """
    A(P): arms already fixed in the top m.
    B(P): arms that must still be split to decide the top m (empty at a leaf).
    """

    a_set: frozenset[int]
    b_set: frozenset[int]


@dataclass(frozen=True, slots=True)
class Dop:
    """
    Phase A: A doubly ordered partition [S_1 >_s(1) S_2 >_s(2) ... >_s(j-1) S_j] of arms 1..k

    - blocks: the ordered blocks, each stored as a sorted tuple (canonical form, so
      structural equality is DOP equality).
    - insertion_order: insertion_order[i] is the label of the inequality between
      blocks[i] and blocks[i+1]; labels are 1..j-1 and record the order in which the
      inequalities were added while descending the tree.
    - k, m: number of arms and players; construction rejects DOPs outside T_{k,m}.

    Phase B: Derived data
    - _b_index: position of B(P) among the blocks, -1 at a leaf.
    - _a_blocks: i(P), the number of blocks making up A(P).
    """

    blocks: tuple[Block, ...]
    insertion_order: tuple[int, ...]
    k: int
    m: int
    _b_index: int = field(init=False, repr=False, compare=False)
    _a_blocks: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _check_shape(self.blocks, self.insertion_order, self.k, self.m)
        if not is_in_tree(self.blocks, self.insertion_order, self.m):
            raise InvalidDopError(f"{format_dop(self)} is not a vertex of T_{{{self.k},{self.m}}}")
        b_index, a_blocks = _locate_b(self.blocks, self.m)
        object.__setattr__(self, "_b_index", b_index)
        object.__setattr__(self, "_a_blocks", a_blocks)

    @classmethod
    def _trusted(cls, blocks: tuple[Block, ...], order: tuple[int, ...], k: int, m: int) -> Dop:
        # Used for vertices derived from a valid vertex (children, parent): skips re-validation.
        dop = object.__new__(cls)
        object.__setattr__(dop, "blocks", blocks)
        object.__setattr__(dop, "insertion_order", order)
        object.__setattr__(dop, "k", k)
        object.__setattr__(dop, "m", m)
        b_index, a_blocks = _locate_b(blocks, m)
        object.__setattr__(dop, "_b_index", b_index)
        object.__setattr__(dop, "_a_blocks", a_blocks)
        return dop

    @property
    def depth(self) -> int:
        return len(self.insertion_order)

    @property
    def is_root(self) -> bool:
        return not self.insertion_order

    @property
    def is_leaf(self) -> bool:
        return self._b_index < 0

    @property
    def a_arms(self) -> tuple[int, ...]:
        return tuple(a for block in self.blocks[: self._a_blocks] for a in block)

    @property
    def b_arms(self) -> Block:
        return self.blocks[self._b_index] if self._b_index >= 0 else ()

    @property
    def relevant_arms(self) -> tuple[int, ...]:
        """A(P) ∪ B(P): the arms a player at this vertex keeps exploring."""
        return self.a_arms + self.b_arms

    def split(self, upper: Block, lower: Block) -> Dop:
        """Child obtained by splitting B(P) into upper > lower with the next inequality label."""
        i = self._b_index
        blocks = self.blocks[:i] + (upper, lower) + self.blocks[i + 1 :]
        order = self.insertion_order[:i] + (self.depth + 1,) + self.insertion_order[i:]
        return Dop._trusted(blocks, order, self.k, self.m)

    def __str__(self) -> str:
        return format_dop(self)


def _check_shape(blocks: tuple[Block, ...], order: tuple[int, ...], k: int, m: int) -> None:
    if not 1 <= m < k:
        raise InvalidDopError(f"need 1 <= m < k, got k={k}, m={m}")
    seen: list[int] = [a for block in blocks for a in block]
    if any(not block for block in blocks):
        raise InvalidDopError("blocks must be nonempty")
    if sorted(seen) != list(range(1, k + 1)):
        raise InvalidDopError(f"blocks must partition arms 1..{k}")
    if any(tuple(sorted(block)) != block for block in blocks):
        raise InvalidDopError("blocks must be stored as sorted tuples")
    if sorted(order) != list(range(1, len(blocks))):
        raise InvalidDopError("insertion_order must be a permutation of 1..j-1")


def _locate_b(blocks: tuple[Block, ...], m: int) -> tuple[int, int]:
    # i(P) is the largest i with |S_1|+...+|S_i| <= m; B(P) = S_{i(P)+1} unless |A(P)| = m.
    total = 0
    for idx, block in enumerate(blocks):
        if total + len(block) > m:
            return (-1 if total == m else idx), idx
        total += len(block)
    return -1, len(blocks)


def _merge_last(blocks: tuple[Block, ...], order: tuple[int, ...]) -> tuple[tuple[Block, ...], tuple[int, ...], Block]:
    i = order.index(len(order))
    merged = tuple(sorted(blocks[i] + blocks[i + 1]))
    return blocks[:i] + (merged,) + blocks[i + 2 :], order[:i] + order[i + 1 :], merged


def is_in_tree(blocks: tuple[Block, ...], order: tuple[int, ...], m: int) -> bool:
    """
    Decide membership in T_{K,m}: undoing the most recent inequality must give a
    vertex of the tree whose B-set is exactly the union of the two merged blocks.
    """
    while order:
        blocks, order, merged = _merge_last(blocks, order)
        b_index, _ = _locate_b(blocks, m)
        if b_index < 0 or blocks[b_index] != merged:
            return False
    return True


# ---------- Tree navigation ----------


def root(k: int, m: int) -> Dop:
    if not 1 <= m < k:
        raise InvalidDopError(f"need 1 <= m < k, got k={k}, m={m}")
    return Dop._trusted((tuple(range(1, k + 1)),), (), k, m)


def iter_children(p: Dop) -> Iterator[Dop]:
    """Lazily yield the 2^|B|-2 children of p (ordered splits of B(p) into two nonempty parts)."""
    b = p.b_arms
    for size in range(1, len(b)):
        for upper in combinations(b, size):
            chosen = set(upper)
            lower = tuple(a for a in b if a not in chosen)
            yield p.split(upper, lower)


def children(p: Dop) -> list[Dop]:
    return list(iter_children(p))


def parent(p: Dop) -> Dop | None:
    if p.is_root:
        return None
    blocks, order, _ = _merge_last(p.blocks, p.insertion_order)
    return Dop._trusted(blocks, order, p.k, p.m)


def ancestors(p: Dop) -> list[Dop]:
    """[p, parent(p), ..., ROOT]."""
    chain = [p]
    while (up := parent(chain[-1])) is not None:
        chain.append(up)
    return chain


def is_ancestor(q: Dop, p: Dop) -> bool:
    """True when q ⪯ p (q is p itself or one of its ancestors)."""
    if q.depth > p.depth:
        return False
    node: Dop | None = p
    while node is not None and node.depth > q.depth:
        node = parent(node)
    return node == q


def child_toward(p: Dop, q: Dop) -> Dop | None:
    """The child of p on the path from p down to q, or None when q is not a proper descendant."""
    if q.depth <= p.depth:
        return None
    node = q
    while node.depth > p.depth + 1:
        node = parent(node)  # type: ignore[assignment]
    return node if parent(node) == p else None


def ab_sets(p: Dop) -> ArmSetPair:
    return ArmSetPair(a_set=frozenset(p.a_arms), b_set=frozenset(p.b_arms))


def tree_distance(p: Dop, q: Dop) -> int:
    up_p = ancestors(p)
    seen = set(up_p)
    node: Dop | None = q
    while node not in seen:
        node = parent(node)  # type: ignore[arg-type]
    return p.depth + q.depth - 2 * node.depth  # type: ignore[union-attr]


def walk_tree(k: int, m: int, max_depth: int | None = None) -> Iterator[Dop]:
    """Depth-first enumeration of T_{k,m} (optionally truncated at max_depth)."""
    stack = [root(k, m)]
    while stack:
        node = stack.pop()
        yield node
        if max_depth is None or node.depth < max_depth:
            stack.extend(reversed(children(node)))


def tree_counts(k: int, m: int, max_depth: int | None = None) -> dict[str, int]:
    inner = leaves = 0
    depth = 0
    for node in walk_tree(k, m, max_depth):
        depth = max(depth, node.depth)
        if node.is_leaf:
            leaves += 1
        else:
            inner += 1
    return {"vertices": inner + leaves, "inner": inner, "leaves": leaves, "depth": depth}


# ---------- Functionals of a point x in [0,1]^K ----------


def range_of(p: Dop, x: Sequence[float]) -> float:
    if p.is_leaf:
        raise InvalidDopError(f"range is undefined at the leaf {format_dop(p)}")
    values = [x[a - 1] for a in p.b_arms]
    return max(values) - min(values)


def gap_of(p: Dop, x: Sequence[float]) -> float:
    if p.is_root:
        raise InvalidDopError("gap is undefined at ROOT (no inequality has been added)")
    i = p.insertion_order.index(p.depth)
    return min(x[a - 1] for a in p.blocks[i]) - max(x[a - 1] for a in p.blocks[i + 1])


def ranking(x: Sequence[float]) -> list[int]:
    """Arms sorted by decreasing x, ties broken by ascending arm index."""
    return sorted(range(1, len(x) + 1), key=lambda a: (-x[a - 1], a))


def p_star(x: Sequence[float], m: int) -> Dop:
    order = ranking(x)
    k = len(order)
    if not 1 <= m < k:
        raise InvalidDopError(f"need 1 <= m < k, got k={k}, m={m}")
    return Dop._trusted((tuple(sorted(order[:m])), tuple(sorted(order[m:]))), (1,), k, m)


def feas(p: Dop) -> set[frozenset[int]]:
    """All m-sets made of A(p) plus m-|A(p)| arms of B(p)."""
    a = frozenset(p.a_arms)
    quota = p.m - len(a)
    if quota == 0:
        return {a}
    return {a | frozenset(extra) for extra in combinations(p.b_arms, quota)}


# ---------- Text form ----------

_BLOCK = re.compile(r"\{([^{}]*)\}")
_LABEL = re.compile(r">_(\d+)")


def format_dop(p: Dop) -> str:
    parts = ["{" + ",".join(map(str, p.blocks[0])) + "}"]
    for label, block in zip(p.insertion_order, p.blocks[1:]):
        parts.append(f">_{label}" + "{" + ",".join(map(str, block)) + "}")
    return "[" + "".join(parts) + "]"


def parse_dop(text: str, m: int) -> Dop:
    """Inverse of format_dop; k is the number of arms appearing in the text."""
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise InvalidDopError(f"cannot parse DOP text {text!r}")
    try:
        blocks = tuple(
            tuple(sorted(int(tok) for tok in raw.split(",") if tok.strip()))
            for raw in _BLOCK.findall(body)
        )
    except ValueError as exc:
        raise InvalidDopError(f"cannot parse DOP text {text!r}") from exc
    order = tuple(int(tok) for tok in _LABEL.findall(body))
    if not blocks or len(order) != len(blocks) - 1:
        raise InvalidDopError(f"cannot parse DOP text {text!r}")
    k = sum(len(block) for block in blocks)
    return Dop(blocks, order, k, m)
