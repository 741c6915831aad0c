from __future__ import annotations

from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from mpmab.errors import InvalidInputError


@dataclass(frozen=True)
class Instance:
    """
    Phase A: A stochastic instance
    - p: Bernoulli means of arms 1..K (any order).
    - m: number of players, 1 <= m < K.
    """

    p: tuple[float, ...]
    m: int

    def __post_init__(self) -> None:
        if not 1 <= self.m < len(self.p):
            raise InvalidInputError(f"need 1 <= m < K, got m={self.m}, K={len(self.p)}")
        if any(not (0.0 <= v <= 1.0) for v in self.p):
            raise InvalidInputError(f"means must lie in [0, 1], got {self.p}")

    @property
    def k(self) -> int:
        return len(self.p)

    @property
    def top_sum(self) -> float:
        """p_(1) + ... + p_(m): expected reward of the best collision-free play."""
        return float(sum(sorted(self.p, reverse=True)[: self.m]))

    def to_text(self) -> str:
        return " ".join([str(self.k), str(self.m), *(repr(v) for v in self.p)])

    @classmethod
    def from_text(cls, text: str) -> Instance:
        """Parse `K m p1 ... pK` (whitespace separated)."""
        tokens = text.split()
        try:
            k, m = int(tokens[0]), int(tokens[1])
            p = tuple(float(tok) for tok in tokens[2:])
        except (IndexError, ValueError) as exc:
            raise InvalidInputError(f"cannot parse instance text {text!r}") from exc
        if len(p) != k:
            raise InvalidInputError(f"instance declares K={k} but lists {len(p)} means")
        return cls(p=p, m=m)


def load_instance(path: Path) -> Instance:
    return Instance.from_text(Path(path).read_text(encoding="utf-8"))


def gap(instance: Instance) -> float:
    ordered = sorted(instance.p, reverse=True)
    return ordered[instance.m - 1] - ordered[instance.m]


class FeedbackVariant(str, Enum):
    UNDETECTABLE = "undetectable"
    WEAK = "weak"
    STRONG = "strong"
    FULL_INFO = "full_info"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class Observation:
    """
    What a player sees after a step.
    - y: the bit it learns about its own arm.
    - collided: set only by strong feedback.
    - vector: one bit per arm under full information.
    """

    y: int
    collided: bool | None = None
    vector: tuple[int, ...] | None = None


@dataclass(frozen=True)
class StepOutcome:
    t: int
    arms: tuple[int, ...]
    draws: tuple[int, ...]
    rewards: tuple[int, ...]
    collided: tuple[bool, ...]
    observations: tuple[Observation, ...]


@dataclass(frozen=True)
class SharedRandomness:
    """What all players share at step t: the priority order pi_t, the cut multipliers c and delta_t."""

    pi: tuple[int, ...]
    c: tuple[float, ...]
    delta: float


@dataclass(frozen=True)
class AdversaryView:
    """
    Everything an adaptive adversary may look at when corrupting a collider's feedback.
    `shared` is None when the caller runs without shared randomness.
    """

    t: int
    arms: tuple[int, ...]
    draws: tuple[int, ...]
    collided: tuple[bool, ...]
    history: tuple[StepOutcome, ...]
    shared: SharedRandomness | None = None


AdversaryPolicy = Callable[[AdversaryView, int], int]


def _flip(view: AdversaryView, index: int) -> int:
    return 1 - view.draws[index]


ADVERSARY_POLICIES: dict[str, AdversaryPolicy] = {
    "flip": _flip,
    "zero": lambda view, index: 0,
    "one": lambda view, index: 1,
}


@dataclass
class FeedbackModel:
    """
    Phase A: Observation semantics

    - undetectable: every player sees its draw Y.
    - weak: every player sees its reward (0 on collision).
    - strong: weak plus a collision flag.
    - full_info: a fresh Bernoulli draw for every arm.
    - adversarial: Y for non-colliders; `policy` picks the bit a collider sees.

    Phase B: History
    - The adversarial variant keeps every StepOutcome so the policy sees the full past.
    """

    variant: FeedbackVariant = FeedbackVariant.UNDETECTABLE
    policy: AdversaryPolicy | None = None
    history: list[StepOutcome] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self.variant = FeedbackVariant(self.variant)
        if self.variant is FeedbackVariant.ADVERSARIAL and self.policy is None:
            self.policy = ADVERSARY_POLICIES["flip"]

    @classmethod
    def named(cls, variant: str, adversary: str = "flip") -> FeedbackModel:
        if adversary not in ADVERSARY_POLICIES:
            raise InvalidInputError(f"unknown adversary policy {adversary!r}; choose from {sorted(ADVERSARY_POLICIES)}")
        return cls(variant=FeedbackVariant(variant), policy=ADVERSARY_POLICIES[adversary])


def collisions_of(arms: Sequence[int]) -> tuple[bool, ...]:
    counts = Counter(arms)
    return tuple(counts[a] > 1 for a in arms)


def step(
    instance: Instance,
    arms: Sequence[int],
    model: FeedbackModel,
    rng: np.random.Generator,
    t: int,
    shared: SharedRandomness | None = None,
) -> StepOutcome:
    """
    Draw independent Y ~ Bernoulli(p_arm) for every player (independent even on a shared arm);
    reward = Y if the player is alone on its arm, else 0. `shared` is handed to the adversary.
    """
    chosen = tuple(int(a) for a in arms)
    if any(not 1 <= a <= instance.k for a in chosen):
        raise InvalidInputError(f"arms must lie in 1..{instance.k}, got {chosen}")
    p = np.asarray(instance.p)
    collided = collisions_of(chosen)

    vectors: np.ndarray | None = None
    if model.variant is FeedbackVariant.FULL_INFO:
        vectors = (rng.random((len(chosen), instance.k)) < p).astype(np.int64)
        draws = tuple(int(vectors[x, a - 1]) for x, a in enumerate(chosen))
    else:
        idx = np.asarray(chosen) - 1
        draws = tuple(int(v) for v in (rng.random(len(chosen)) < p[idx]))
    rewards = tuple(0 if hit else y for y, hit in zip(draws, collided))

    if model.variant is FeedbackVariant.FULL_INFO:
        assert vectors is not None
        observations = tuple(
            Observation(y=draws[x], vector=tuple(int(b) for b in vectors[x])) for x in range(len(chosen))
        )
    elif model.variant is FeedbackVariant.WEAK:
        observations = tuple(Observation(y=r) for r in rewards)
    elif model.variant is FeedbackVariant.STRONG:
        observations = tuple(Observation(y=r, collided=hit) for r, hit in zip(rewards, collided))
    elif model.variant is FeedbackVariant.ADVERSARIAL and any(collided):
        view = AdversaryView(
            t=t, arms=chosen, draws=draws, collided=collided, history=tuple(model.history), shared=shared
        )
        assert model.policy is not None
        observations = tuple(
            Observation(y=int(model.policy(view, x)) if hit else y)
            for x, (y, hit) in enumerate(zip(draws, collided))
        )
    else:
        observations = tuple(Observation(y=y) for y in draws)

    outcome = StepOutcome(
        t=t, arms=chosen, draws=draws, rewards=rewards, collided=collided, observations=observations
    )
    if model.variant is FeedbackVariant.ADVERSARIAL:
        model.history.append(outcome)
    return outcome


def regret_increment(instance: Instance, arms: Sequence[int]) -> float:
    """Pseudo-regret of one step: top-m mean sum minus the expected reward of the chosen arms."""
    collided = collisions_of(arms)
    # summed largest first, like top_sum, so an optimal step gives exactly 0.0
    earned = sum(sorted((instance.p[a - 1] for a, hit in zip(arms, collided) if not hit), reverse=True))
    return instance.top_sum - earned


def mean_based_wrapper(history: Sequence[Sequence[int]], rng: np.random.Generator) -> list[np.ndarray]:
    """
    Independently and uniformly permute each arm's observation sequence.

    Standalone: the players in this package keep only per-arm counts and sums, so they are
    mean-based already and the harness never needs to wrap their full-information feedback.
    Wrap an order-sensitive strategy's history with it to make that strategy mean-based.
    """
    return [rng.permutation(np.asarray(seq)) for seq in history]
