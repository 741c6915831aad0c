from __future__ import annotations

import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from loguru import logger

from mpmab.config.settings import settings
from mpmab.errors import InvalidInputError

Label = tuple[int, int]

# All 9 pairs (arm of player 1, arm of player 2) over arms 1..3; index in this list = label code.
LABELS: tuple[Label, ...] = tuple(product((1, 2, 3), repeat=2))
N_LABELS = len(LABELS)


def value(u: Sequence[float]) -> float:
    """Sum of the two largest coordinates."""
    top = sorted((float(v) for v in u), reverse=True)
    return top[0] + top[1]


def gain(label_u: Label, label_v: Label, u: Sequence[float]) -> float:
    """Reward when player 1 acts on u and player 2 on v: 0 if they meet, else u_i + u_j'."""
    i, j_other = label_u[0], label_v[1]
    if i == j_other:
        return 0.0
    return float(u[i - 1]) + float(u[j_other - 1])


def is_gamma_loss(
    u: Sequence[float],
    v: Sequence[float],
    label_u: Label,
    label_v: Label,
    gamma: float,
    tolerance: float = 0.0,
) -> bool:
    """value(u) - gain >= gamma; `tolerance` widens the loss side of the boundary."""
    return value(u) - gain(label_u, label_v, u) >= gamma - tolerance


@dataclass(frozen=True)
class PointRing:
    """
    Phase A: n points on a perturbed circle around the line x = y = z

    - points: array (n, 3); consecutive indices are neighbours, indices wrap mod n.
    - gamma, window: a labeling must avoid gamma-losses at every ordered pair whose
      cyclic index distance is in 1..window.
    - warnings: reasons the ring falls short of the obstruction's preconditions
      (empty for a claim-strength ring).
    """

    points: np.ndarray
    gamma: float
    window: int
    center_sum: float = math.nan
    radius: float = math.nan
    perturbation: float = math.nan
    seed: int | None = None
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"points must have shape (n, 3), got {pts.shape}")
        if self.window < 1 or pts.shape[0] <= 2 * self.window:
            raise InvalidInputError(f"need n > 2 * window, got n={pts.shape[0]}, window={self.window}")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def claim_strength(self) -> bool:
        return not self.warnings


def _ring_warnings(n: int, radius: float, perturbation: float) -> tuple[str, ...]:
    out = []
    if n < settings.CLAIM_MIN_POINTS:
        out.append(f"n={n} below {settings.CLAIM_MIN_POINTS}")
    if radius < settings.CLAIM_MIN_RADIUS:
        out.append(f"radius={radius} below {settings.CLAIM_MIN_RADIUS}")
    if perturbation > settings.CLAIM_MAX_PERTURBATION:
        out.append(f"perturbation={perturbation} above {settings.CLAIM_MAX_PERTURBATION}")
    return tuple(out)


def circle_points(
    n: int,
    center_sum: float,
    radius: float,
    perturbation: float,
    rng: np.random.Generator,
    gamma: float | None = None,
    window: int | None = None,
    seed: int | None = None,
) -> PointRing:
    """
    Phase A: Geometry
    - The circle lies in the plane x + y + z = center_sum, centred on (C/3, C/3, C/3),
      spanned by the orthonormal pair (1,-1,0)/sqrt2 and (1,1,-2)/sqrt6.
    - Points are evenly spaced from a random phase, then each is moved by a vector drawn
      uniformly from the ball of radius `perturbation`.

    Phase B: Preconditions
    - Rings below claim strength are still built (for falsification runs); the reasons
      are stored on the ring and logged.
    """
    if n < 3 or radius < 0 or perturbation < 0:
        raise InvalidInputError(f"bad ring parameters n={n}, radius={radius}, perturbation={perturbation}")
    e1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    e2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
    center = np.full(3, center_sum / 3.0)

    phase = rng.uniform(0.0, 2.0 * math.pi)
    angles = phase + 2.0 * math.pi * np.arange(n) / n
    points = center + radius * (np.cos(angles)[:, None] * e1 + np.sin(angles)[:, None] * e2)

    if perturbation > 0:
        directions = rng.standard_normal((n, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        lengths = perturbation * rng.random(n) ** (1.0 / 3.0)
        points = points + directions * lengths[:, None]

    warnings = _ring_warnings(n, radius, perturbation)
    for reason in warnings:
        logger.warning("ring below claim strength: {}", reason)
    return PointRing(
        points=points,
        gamma=settings.CLAIM_GAMMA if gamma is None else gamma,
        window=settings.CLAIM_WINDOW if window is None else window,
        center_sum=center_sum,
        radius=radius,
        perturbation=perturbation,
        seed=seed,
        warnings=warnings,
    )


@dataclass(frozen=True)
class ObstructionCertificate:
    """
    - status: "infeasible" (every labeling has an in-window gamma-loss) or "counterexample".
    - labeling: a loss-free labeling when one exists.
    - stats: reachable (start state, state) pairs after each DP step.
    """

    status: str
    ring: PointRing
    labeling: tuple[Label, ...] | None
    stats: tuple[int, ...]

    @property
    def infeasible(self) -> bool:
        return self.status == "infeasible"

    def to_text(self) -> str:
        ring = self.ring
        lines = [
            f"status: {self.status}",
            f"n: {ring.n}",
            f"radius: {ring.radius}",
            f"perturbation: {ring.perturbation}",
            f"seed: {ring.seed}",
            f"gamma: {ring.gamma}",
            f"window: {ring.window}",
            f"claim_strength: {ring.claim_strength}",
            f"dp_states: {N_LABELS ** ring.window}",
            f"reachable_min: {min(self.stats)}",
            f"reachable_max: {max(self.stats)}",
        ]
        if self.labeling is not None:
            lines.append("labeling: " + " ".join(f"{i}{j}" for i, j in self.labeling))
        return "\n".join(lines)


# ---------- Loss tables ----------


def _pair_allowed(ring: PointRing, j: int, j_other: int, tolerance: float) -> np.ndarray:
    """ok[a, b]: labeling P_j with LABELS[a] and P_j' with LABELS[b] is not a loss at (j, j')."""
    u = ring.points[j]
    lhs = value(u)
    ok = np.ones((N_LABELS, N_LABELS), dtype=bool)
    for a, label_u in enumerate(LABELS):
        for b, label_v in enumerate(LABELS):
            ok[a, b] = lhs - gain(label_u, label_v, u) < ring.gamma - tolerance
    return ok


def _window_pairs(ring: PointRing) -> list[tuple[int, int]]:
    """Every ordered pair (j, j') with cyclic distance in 1..window, each exactly once."""
    n, w = ring.n, ring.window
    pairs = []
    for j in range(n):
        for d in range(1, w + 1):
            pairs.append((j, (j + d) % n))
            pairs.append(((j + d) % n, j))
    return pairs


def _window_table(ring: PointRing, start: int, tolerance: float) -> np.ndarray:
    """allowed[a_0, ..., a_w] over the labels of positions start..start+w (mod n)."""
    w, n = ring.window, ring.n
    table = np.ones((N_LABELS,) * (w + 1), dtype=bool)
    for x in range(w + 1):
        for y in range(w + 1):
            if x == y:
                continue
            ok = _pair_allowed(ring, (start + x) % n, (start + y) % n, tolerance)
            shape = [1] * (w + 1)
            shape[x], shape[y] = N_LABELS, N_LABELS
            # broadcast ok along every other axis; transpose when x > y so axes line up
            table &= (ok if x < y else ok.T).reshape(shape)
    return table


def _transfer_matrix(table: np.ndarray, window: int) -> np.ndarray:
    """M[s, s']: state s = labels (a_0..a_{w-1}) can step to s' = (a_1..a_w)."""
    states = N_LABELS**window
    flat = table.reshape(states, N_LABELS)
    s = np.repeat(np.arange(states), N_LABELS)
    nxt = (s % (states // N_LABELS)) * N_LABELS + np.tile(np.arange(N_LABELS), states)
    matrix = np.zeros((states, states), dtype=bool)
    matrix[s, nxt] = flat.reshape(-1)
    return matrix


def _reachability(starts: np.ndarray, matrices: list[np.ndarray]) -> list[np.ndarray]:
    """R_0 = rows of the identity for `starts`, R_{k+1} = R_k @ M_k over the booleans."""
    states = matrices[0].shape[0]
    reach = np.zeros((len(starts), states), dtype=bool)
    reach[np.arange(len(starts)), starts] = True
    out = [reach]
    for matrix in matrices:
        reach = (reach.astype(np.float32) @ matrix.astype(np.float32)) > 0.5
        out.append(reach)
    return out


def verify_obstruction(
    ring: PointRing,
    tolerance: float | None = None,
    workers: int = 1,
) -> ObstructionCertificate:
    """
    Phase A: Does ANY labeling of the ring avoid every in-window gamma-loss?

    - For each cyclic window of window+1 consecutive positions, tabulate the label
      tuples creating no loss among the ordered pairs inside the window.
    - Run a cyclic transfer DP over states = labels of `window` consecutive positions
      (81 states for window 2): a loss-free labeling is a closed walk of length n.

    Phase B: Start states
    - Start states are independent; with workers > 1 they are split into chunks checked
      in a thread pool and the verdicts merged by disjunction.

    Phase C: Counterexample
    - When some start state returns to itself, the walk is backtracked into a labeling.
    """
    tol = settings.LOSS_TOLERANCE if tolerance is None else tolerance
    w, n = ring.window, ring.n
    states = N_LABELS**w
    matrices = [_transfer_matrix(_window_table(ring, i, tol), w) for i in range(n)]

    chunks = np.array_split(np.arange(states), max(1, min(workers, states)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda chunk: _reachability(chunk, matrices), chunks))
    else:
        runs = [_reachability(chunk, matrices) for chunk in chunks]

    stats = tuple(int(sum(run[k].sum() for run in runs)) for k in range(n + 1))
    logger.debug("obstruction DP n={} reachable per step={}", n, stats)

    for chunk, run in zip(chunks, runs):
        closed = run[n][np.arange(len(chunk)), chunk]
        if closed.any():
            row = int(np.flatnonzero(closed)[0])
            labeling = _backtrack(int(chunk[row]), row, run, matrices)
            return ObstructionCertificate("counterexample", ring, labeling, stats)
    return ObstructionCertificate("infeasible", ring, None, stats)


def _backtrack(start: int, row: int, run: list[np.ndarray], matrices: list[np.ndarray]) -> tuple[Label, ...]:
    n = len(matrices)
    tail = matrices[0].shape[0] // N_LABELS
    # the closed walk ends where it started; recover states n-1, ..., 1 backwards
    backwards = []
    current = start
    for k in range(n - 1, 0, -1):
        candidates = np.flatnonzero(run[k][row] & matrices[k][:, current])
        current = int(candidates[0])
        backwards.append(current)
    walk = [start, *reversed(backwards)]
    # walk[k] holds the labels of positions k..k+w-1; its leading label is position k
    return tuple(LABELS[state // tail] for state in walk)


def validate_labeling(ring: PointRing, labels: Sequence[Label], tolerance: float | None = None) -> list[tuple[int, int]]:
    """Ordered in-window pairs (j, j') that are gamma-losses under `labels`; empty means loss-free."""
    tol = settings.LOSS_TOLERANCE if tolerance is None else tolerance
    if len(labels) != ring.n:
        raise InvalidInputError(f"need {ring.n} labels, got {len(labels)}")
    return [
        (j, jo)
        for j, jo in _window_pairs(ring)
        if is_gamma_loss(ring.points[j], ring.points[jo], labels[j], labels[jo], ring.gamma, tol)
    ]


def brute_force_feasible(ring: PointRing, tolerance: float | None = None) -> bool:
    """Enumerate all 9^n labelings (vectorised); meant for n <= 7."""
    tol = settings.LOSS_TOLERANCE if tolerance is None else tolerance
    n = ring.n
    codes = np.arange(N_LABELS**n, dtype=np.int64)
    digits = [((codes // N_LABELS**j) % N_LABELS).astype(np.int8) for j in range(n)]
    alive = np.ones(codes.shape[0], dtype=bool)
    for j, jo in _window_pairs(ring):
        alive &= _pair_allowed(ring, j, jo, tol)[digits[j], digits[jo]]
    return bool(alive.any())
