"""Counting, ranking and unranking of every game state for ``n`` players.

Index layout (0-based)::

    [ transient states | absorbing states ]

Inside each block states are sorted by center pot ascending, then by the
colex (combinatorial number system) rank of the seat composition, then by
turn.  Since the pot never shrinks, every transition either stays on its
center level or moves to a later one.

A composition ``x`` of ``S`` chips over ``n`` seats maps to the bar positions
``b_j = x_1 + ... + x_j + (j - 1)`` for ``j = 1..n-1`` and has colex rank
``sum_j C(b_j, j)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator

import numpy as np

from .rules import CHIPS_PER_PLAYER, GameState


def count_states(n: int) -> int:
    """``n * (C(4n, n) - 1)``: every chip split except all-in-center, times every turn."""
    if not isinstance(n, int) or n < 2:
        raise ValueError(f"need n >= 2 players, got {n!r}")
    return n * (math.comb(4 * n, n) - 1)


def growth_ratio(n: int) -> float:
    return count_states(n + 1) / count_states(n)


@dataclass(frozen=True)
class StateSpaceMeta:
    n: int
    total: int
    t: int
    a: int
    start: int


def _rank_composition(chips, binom) -> int:
    rank, bar = 0, -1
    for j, x in enumerate(chips[:-1], start=1):
        bar += x + 1
        rank += binom(bar, j)
    return rank


def _unrank_composition(rank: int, n: int, total: int) -> tuple[int, ...]:
    bars = [0] * (n - 1)
    top = total + n - 2
    for j in range(n - 1, 0, -1):
        while math.comb(top, j) > rank:
            top -= 1
        bars[j - 1] = top
        rank -= math.comb(top, j)
        top -= 1
    edges = [-1, *bars, total + n - 1]
    return tuple(edges[i + 1] - edges[i] - 1 for i in range(n))


class StateSpace:
    """Bijection between :class:`GameState` and ``0..count_states(n)-1``."""

    def __init__(self, n: int):
        count_states(n)  # validates n
        self.n = n
        self.chips_total = CHIPS_PER_PLAYER * n
        # levels indexed by center c = 0..3n-1; S = 3n - c chips on seats
        self.level_compositions = [math.comb(self.chips_total - c + n - 1, n - 1) for c in range(self.chips_total)]
        self.transient_offsets = [0]
        for m in self.level_compositions:
            self.transient_offsets.append(self.transient_offsets[-1] + (m - n) * n)
        self.t = self.transient_offsets[-1]
        self.a = self.chips_total * n * n
        self.total = self.t + self.a
        assert self.total == count_states(n)
        # single-pile compositions per level, ascending rank; pile on seat n first
        self.single_ranks = [
            [self._single_rank(self.chips_total - c, seat) for seat in range(n, 0, -1)] for c in range(self.chips_total)
        ]

    def _single_rank(self, s: int, seat: int) -> int:
        return sum(math.comb(s + j - 1, j) for j in range(seat, self.n))

    @cached_property
    def meta(self) -> StateSpaceMeta:
        return StateSpaceMeta(self.n, self.total, self.t, self.a, self.rank(GameState.initial(self.n)))

    def level_bounds(self) -> list[tuple[int, int]]:
        """Transient index range ``[lo, hi)`` of every center level."""
        off = self.transient_offsets
        return [(off[c], off[c + 1]) for c in range(self.chips_total)]

    def rank(self, state: GameState) -> int:
        if state.n != self.n:
            raise ValueError(f"{state} does not have {self.n} players")
        if sum(state.chips) + state.center != self.chips_total:
            raise ValueError(f"{state} does not hold {self.chips_total} chips")
        c, n = state.center, self.n
        r = _rank_composition(state.chips, math.comb)
        singles = self.single_ranks[c]
        pos = bisect.bisect_left(singles, r)
        if pos < n and singles[pos] == r:
            return self.t + (c * n + pos) * n + state.turn - 1
        return self.transient_offsets[c] + (r - pos) * n + state.turn - 1

    def unrank(self, index: int) -> GameState:
        if not 0 <= index < self.total:
            raise ValueError(f"index {index} outside 0..{self.total - 1}")
        n = self.n
        if index >= self.t:
            local, turn0 = divmod(index - self.t, n)
            c, pos = divmod(local, n)
            seat = n - pos
            chips = [0] * n
            chips[seat - 1] = self.chips_total - c
            return GameState(tuple(chips), c, turn0 + 1)
        c = bisect.bisect_right(self.transient_offsets, index) - 1
        comp_pos, turn0 = divmod(index - self.transient_offsets[c], n)
        r = comp_pos
        for s in self.single_ranks[c]:
            if s <= r:
                r += 1
        chips = _unrank_composition(r, n, self.chips_total - c)
        return GameState(chips, c, turn0 + 1)

    def enumerate(self) -> Iterator[GameState]:
        for i in range(self.total):
            yield self.unrank(i)

    # vectorized helpers used by the sparse assembly

    @cached_property
    def _binom_table(self) -> np.ndarray:
        size = self.chips_total + self.n + 1
        table = np.zeros((size, self.n), dtype=np.int64)
        for top in range(size):
            for j in range(self.n):
                table[top, j] = math.comb(top, j)
        return table

    def rank_many(self, chips: np.ndarray, center: np.ndarray, turn: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`rank`; ``turn`` is 1-based."""
        n = self.n
        binom = self._binom_table
        bars = np.cumsum(chips[:, :-1].astype(np.int64) + 1, axis=1) - 1
        r = binom[bars, np.arange(1, n)].sum(axis=1)
        center = center.astype(np.int64)
        singles = np.asarray(self.single_ranks, dtype=np.int64)[center]  # (N, n), ascending
        below = (singles < r[:, None]).sum(axis=1)
        is_single = (singles == r[:, None]).any(axis=1)
        offsets = np.asarray(self.transient_offsets, dtype=np.int64)[center]
        transient_idx = offsets + (r - below) * n + turn - 1
        absorbing_idx = self.t + (center * n + below) * n + turn - 1
        return np.where(is_single, absorbing_idx, transient_idx)

    @cached_property
    def state_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(chips[N, n], center[N], turn[N])`` for every index, in rank order."""
        n, total = self.n, self.chips_total
        binom = self._binom_table
        chips_parts, center_parts = [], []
        for c in range(total):
            s = total - c
            ranks = np.arange(self.level_compositions[c], dtype=np.int64)
            ranks = ranks[~np.isin(ranks, self.single_ranks[c])]
            chips_parts.append(_unrank_compositions(ranks, n, s, binom))
            center_parts.append(np.full(len(ranks), c, dtype=np.int64))
        comps = np.concatenate(chips_parts)
        centers = np.concatenate(center_parts)
        t_chips = np.repeat(comps, n, axis=0)
        t_center = np.repeat(centers, n)
        t_turn = np.tile(np.arange(1, n + 1, dtype=np.int64), len(comps))
        # absorbing: level c, pile on seat n - pos, every turn
        c_idx, local = np.divmod(np.arange(self.a, dtype=np.int64), n * n)
        pos, turn0 = np.divmod(local, n)
        a_chips = np.zeros((self.a, n), dtype=np.int64)
        a_chips[np.arange(self.a), n - pos - 1] = total - c_idx
        chips = np.concatenate([t_chips, a_chips]).astype(np.int8)
        center = np.concatenate([t_center, c_idx]).astype(np.int16)
        turn = np.concatenate([t_turn, turn0 + 1]).astype(np.int8)
        for arr in (chips, center, turn):
            arr.setflags(write=False)
        return chips, center, turn


def _unrank_compositions(ranks: np.ndarray, n: int, total: int, binom: np.ndarray) -> np.ndarray:
    bars = np.empty((len(ranks), n - 1), dtype=np.int64)
    r = ranks.copy()
    for j in range(n - 1, 0, -1):
        col = binom[:, j]
        top = np.searchsorted(col, r, side="right") - 1
        bars[:, j - 1] = top
        r -= col[top]
    edges = np.concatenate(
        [np.full((len(ranks), 1), -1), bars, np.full((len(ranks), 1), total + n - 1)], axis=1
    )
    return np.diff(edges, axis=1) - 1


@lru_cache(maxsize=16)
def state_space(n: int) -> StateSpace:
    return StateSpace(n)


def rank(state: GameState) -> int:
    return state_space(state.n).rank(state)


def unrank(index: int, n: int) -> GameState:
    return state_space(n).unrank(index)


def enumerate_states(n: int) -> Iterator[GameState]:
    """Every state for ``n`` players, once each, in rank order."""
    return state_space(n).enumerate()
