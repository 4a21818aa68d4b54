"""Game rules for Left, Center, Right.

A state is the chip count in front of every seat, the chips in the center pot
and the seat that acts next.  Seats are numbered ``1..n``; chips passed LEFT
go to seat ``turn - 1`` and chips passed RIGHT go to seat ``turn + 1`` (both
wrapping), so with two players both faces feed the single opponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

CHIPS_PER_PLAYER = 3
MAX_DICE = 3

HOLD_P = Fraction(1, 2)
FACE_P = Fraction(1, 6)  # each of L, C, R


@dataclass(frozen=True)
class GameState:
    """Markov state ``(c_1, ..., c_n; turn)`` plus the center pot."""

    chips: tuple[int, ...]
    center: int
    turn: int

    def __post_init__(self):
        n = len(self.chips)
        if n < 2:
            raise ValueError(f"need at least 2 players, got {n}")
        if any(c < 0 for c in self.chips) or self.center < 0:
            raise ValueError(f"negative chip count in {self}")
        if not 1 <= self.turn <= n:
            raise ValueError(f"turn {self.turn} outside 1..{n}")
        total = CHIPS_PER_PLAYER * n
        if sum(self.chips) + self.center != total:
            raise ValueError(f"chips must sum to {total}: {self}")
        if self.center == total:
            raise ValueError("every chip in the center is not a game state")

    @property
    def n(self) -> int:
        return len(self.chips)

    @classmethod
    def initial(cls, n: int) -> GameState:
        return cls((CHIPS_PER_PLAYER,) * n, 0, 1)

    def __str__(self):
        return f"({','.join(map(str, self.chips))};{self.turn})"


@dataclass(frozen=True)
class RollOutcome:
    """Counts of LEFT, CENTER and RIGHT faces in one throw; the rest are HOLD."""

    l: int
    c: int
    r: int
    probability: Fraction

    @property
    def moved(self) -> int:
        return self.l + self.c + self.r


@dataclass(frozen=True)
class RuleVariant:
    """``modified_start``: player 1's first roll of the game reads every L as H."""

    modified_start: bool = False

    @property
    def name(self) -> str:
        return "modified" if self.modified_start else "standard"


STANDARD = RuleVariant(False)
MODIFIED = RuleVariant(True)


@lru_cache(maxsize=None)
def roll_distribution(num_dice: int) -> tuple[RollOutcome, ...]:
    """Exact distribution of the (L, C, R) face counts for ``num_dice`` dice.

    Outcomes are listed by number of non-HOLD faces, then lexicographically
    by ``(l, c, r)`` descending in ``l``.
    """
    if not isinstance(num_dice, int) or not 0 <= num_dice <= MAX_DICE:
        raise ValueError(f"num_dice must be in 0..{MAX_DICE}, got {num_dice!r}")
    outcomes = []
    for moved in range(num_dice + 1):
        h = num_dice - moved
        for l in range(moved, -1, -1):
            for c in range(moved - l, -1, -1):
                r = moved - l - c
                ways = math.factorial(num_dice) // (
                    math.factorial(l) * math.factorial(c) * math.factorial(r) * math.factorial(h)
                )
                p = ways * HOLD_P**h * FACE_P**moved
                outcomes.append(RollOutcome(l, c, r, p))
    return tuple(outcomes)


def dice_for(state: GameState) -> int:
    return min(state.chips[state.turn - 1], MAX_DICE)


def next_turn(turn: int, n: int) -> int:
    return turn % n + 1


def apply_roll(state: GameState, outcome: RollOutcome) -> GameState:
    """Move chips for one roll and pass the turn to the next seat."""
    n = state.n
    mover = state.turn - 1
    if outcome.moved > state.chips[mover]:
        raise ValueError(f"outcome {outcome} needs more chips than seat {state.turn} holds in {state}")
    chips = list(state.chips)
    chips[mover] -= outcome.moved
    chips[(mover - 1) % n] += outcome.l
    chips[(mover + 1) % n] += outcome.r
    return GameState(tuple(chips), state.center + outcome.c, next_turn(state.turn, n))


def winner(state: GameState) -> int | None:
    """Seat holding every remaining chip, or ``None`` while two or more seats hold chips."""
    holders = [i for i, c in enumerate(state.chips, start=1) if c > 0]
    return holders[0] if len(holders) == 1 else None


def _merged(state: GameState, outcomes) -> list[tuple[GameState, Fraction]]:
    merged: dict[GameState, Fraction] = {}
    for outcome in outcomes:
        nxt = apply_roll(state, outcome)
        merged[nxt] = merged.get(nxt, Fraction(0)) + outcome.probability
    return list(merged.items())


def successors(state: GameState) -> list[tuple[GameState, Fraction]]:
    """One-step distribution from a non-absorbing state, duplicates merged."""
    if winner(state) is not None:
        raise ValueError(f"{state} is absorbing; the game is over")
    if state.chips[state.turn - 1] == 0:
        return [(GameState(state.chips, state.center, next_turn(state.turn, state.n)), Fraction(1))]
    return _merged(state, roll_distribution(dice_for(state)))


def first_turn_successors(state: GameState, variant: RuleVariant) -> list[tuple[GameState, Fraction]]:
    """Distribution after player 1's opening roll under ``variant``."""
    if state != GameState.initial(state.n):
        raise ValueError(f"{state} is not the initial state")
    if not variant.modified_start:
        return successors(state)
    outcomes = [RollOutcome(0, o.c, o.r, o.probability) for o in roll_distribution(dice_for(state))]
    return _merged(state, outcomes)


@lru_cache(maxsize=None)
def move_table(num_dice: int, n: int, drop_left: bool = False) -> tuple[tuple[int, int, int, Fraction], ...]:
    """Distinct chip movements ``(to_left, to_center, to_right, p)`` for one roll.

    Outcomes that move chips identically are merged exactly: with two players
    LEFT and RIGHT reach the same seat, so everything is booked as ``to_left``.
    ``drop_left`` applies the modified opening roll.
    """
    merged: dict[tuple[int, int, int], Fraction] = {}
    for o in roll_distribution(num_dice):
        l = 0 if drop_left else o.l
        key = (l + o.r, o.c, 0) if n == 2 else (l, o.c, o.r)
        merged[key] = merged.get(key, Fraction(0)) + o.probability
    return tuple((*k, p) for k, p in merged.items())
