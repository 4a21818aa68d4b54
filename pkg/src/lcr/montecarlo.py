"""Monte Carlo play of Left, Center, Right with reproducible, chunked randomness.

Game ``i`` of a run belongs to chunk ``i // chunk_size``.  Every chunk owns a
xoshiro256** stream whose 256-bit state is

    numpy.random.SeedSequence(seed, spawn_key=(chunk_index,)).generate_state(4, numpy.uint64)

and games in a chunk are played in order from that stream, so results do not
depend on how many workers share the chunks.  A roll of ``d`` dice consumes
one draw, uniform on ``0..6**d - 1``: the top 32 bits of a xoshiro output are
mapped with Lemire's multiply-and-reject method, and base-6 digits (least
significant first) are die faces, ``0 = L, 1 = C, 2 = R, 3..5 = H``.

All per-chunk accumulators are integers (win counts, sums of lengths and of
squared lengths, chip sums), so merging is exact and order independent.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
from numba import njit, uint64

from .rules import CHIPS_PER_PLAYER, MAX_DICE, STANDARD, RuleVariant

MAX_TRANSITIONS = 10_000_000
DEFAULT_CHUNK = 65_536
_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


class SimulationDefect(RuntimeError):
    """A simulated game ran past the transition cap."""


class DiceStream(Protocol):
    def integers(self, low: int, high: int) -> int: ...


# -- random stream ------------------------------------------------------------


def chunk_state(seed: int, chunk: int) -> np.ndarray:
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    state = np.random.SeedSequence(seed, spawn_key=(chunk,)).generate_state(4, np.uint64)
    if not state.any():
        state[0] = 1
    return state


class Xoshiro256:
    """Pure-Python twin of the compiled stream, for single games and tests."""

    def __init__(self, state: Sequence[int]):
        self.s = [int(x) & _MASK64 for x in state]

    @classmethod
    def for_chunk(cls, seed: int, chunk: int) -> Xoshiro256:
        return cls(chunk_state(seed, chunk))

    def next64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def integers(self, low: int, high: int) -> int:
        bound = high - low
        threshold = (1 << 32) % bound
        while True:
            m = (self.next64() >> 32) * bound
            if (m & _MASK32) >= threshold:
                return low + (m >> 32)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


@njit(inline="always")
def _rotl_u64(x, k):
    return (x << uint64(k)) | (x >> uint64(64 - k))


@njit(nogil=True)
def _draw(s, bound):
    threshold = (uint64(1) << uint64(32)) % uint64(bound)
    while True:
        result = _rotl_u64(s[1] * uint64(5), 7) * uint64(9)
        t = s[1] << uint64(17)
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl_u64(s[3], 45)
        m = (result >> uint64(32)) * uint64(bound)
        if (m & uint64(0xFFFFFFFF)) >= threshold:
            return np.int64(m >> uint64(32))


def _face_tables() -> np.ndarray:
    """``table[d, code] = (l, c, r)`` for every roll code of ``d`` dice."""
    table = np.zeros((MAX_DICE + 1, 6**MAX_DICE, 3), dtype=np.int64)
    for d in range(MAX_DICE + 1):
        for code in range(6**d):
            x = code
            for _ in range(d):
                face = x % 6
                x //= 6
                if face < 3:
                    table[d, code, face] += 1
    return table


FACES = _face_tables()


# -- one game -----------------------------------------------------------------


def simulate_game(
    n: int, variant: RuleVariant, rng: DiceStream, trace_turns: int | None = None
) -> tuple[int, int, np.ndarray | None]:
    """Play one game from the initial state.

    ``rng`` needs only ``integers(low, high)``; both :class:`Xoshiro256` and
    :class:`numpy.random.Generator` qualify.  Returns ``(winner, transitions,
    trace)``, where ``trace[j]`` holds seat chips then the center at the start
    of turn ``j + 1`` (finished games repeat their final holdings).
    """
    if n < 2:
        raise ValueError(f"need at least 2 players, got {n}")
    chips = [CHIPS_PER_PLAYER] * n
    center = 0
    turn = 0
    holders = n
    length = 0
    trace = np.zeros((trace_turns, n + 1)) if trace_turns else None
    if trace is not None:
        trace[0] = [*chips, center]
    while holders > 1:
        held = chips[turn]
        if held:
            d = min(held, MAX_DICE)
            l, c, r = FACES[d, int(rng.integers(0, 6**d))]
            if length == 0 and variant.modified_start:
                l = 0
            moved = l + c + r
            chips[turn] -= moved
            if moved and not chips[turn]:
                holders -= 1
            for seat, k in (((turn - 1) % n, l), ((turn + 1) % n, r)):
                if k:
                    if not chips[seat]:
                        holders += 1
                    chips[seat] += k
            center += c
        turn = (turn + 1) % n
        length += 1
        if trace is not None and length < trace_turns:
            trace[length] = [*chips, center]
        if length > MAX_TRANSITIONS:
            raise SimulationDefect(f"game exceeded {MAX_TRANSITIONS} transitions")
    if trace is not None and length + 1 < trace_turns:
        trace[length + 1 :] = [*chips, center]
    winner = next(i for i, c in enumerate(chips, start=1) if c)
    return winner, length, trace


@njit(nogil=True, cache=True)
def _play_chunk(n, games, s, modified, horizon, faces, wins, chip_sums):
    """Play ``games`` games; returns ``(sum_len, sum_len_sq, status)``.

    ``chip_sums`` (rows = tracked turns) accumulates holdings per turn start.
    With ``horizon > 0`` a game stops after ``horizon - 1`` transitions and is
    not scored.  ``status`` is -1 if a game hit the transition cap.
    """
    track = chip_sums.shape[0]
    chips = np.empty(n, dtype=np.int64)
    sum_len = 0
    sum_sq = 0
    for _ in range(games):
        chips[:] = 3
        center = 0
        turn = 0
        holders = n
        length = 0
        if track > 0:
            for k in range(n):
                chip_sums[0, k] += 3
        while holders > 1:
            if horizon > 0 and length >= horizon - 1:
                break
            held = chips[turn]
            if held > 0:
                d = held if held < 3 else 3
                code = _draw(s, 6**d)
                l = faces[d, code, 0]
                c = faces[d, code, 1]
                r = faces[d, code, 2]
                if modified and length == 0:
                    l = 0
                moved = l + c + r
                chips[turn] -= moved
                if moved > 0 and chips[turn] == 0:
                    holders -= 1
                if l > 0:
                    left = (turn - 1) % n
                    if chips[left] == 0:
                        holders += 1
                    chips[left] += l
                if r > 0:
                    right = (turn + 1) % n
                    if chips[right] == 0:
                        holders += 1
                    chips[right] += r
                center += c
            turn = (turn + 1) % n
            length += 1
            if length < track:
                for k in range(n):
                    chip_sums[length, k] += chips[k]
                chip_sums[length, n] += center
            if length > 10_000_000:
                return sum_len, sum_sq, -1
        for j in range(length + 1, track):
            for k in range(n):
                chip_sums[j, k] += chips[k]
            chip_sums[j, n] += center
        if holders == 1:
            for k in range(n):
                if chips[k] > 0:
                    wins[k] += 1
            sum_len += length
            sum_sq += length * length
    return sum_len, sum_sq, 0


# -- runs ---------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    n: int
    games: int
    seed: int = 0
    variant: RuleVariant = STANDARD
    chunk_size: int = DEFAULT_CHUNK
    track_chips_turns: int | None = None

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise ValueError(f"need at least 2 players, got {self.n!r}")
        if not isinstance(self.games, int) or self.games < 1:
            raise ValueError(f"games must be >= 1, got {self.games!r}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.track_chips_turns is not None and self.track_chips_turns < 1:
            raise ValueError("track_chips_turns must be >= 1")

    def chunks(self) -> list[tuple[int, int]]:
        """``(chunk_index, games_in_chunk)`` for the whole run."""
        full, rest = divmod(self.games, self.chunk_size)
        sizes = [self.chunk_size] * full + ([rest] if rest else [])
        return list(enumerate(sizes))


@dataclass(frozen=True)
class SimReport:
    n: int
    games: int
    seed: int
    variant: RuleVariant
    length_sum: int
    length_sq_sum: int
    wins: tuple[int, ...]
    chips_by_turn: np.ndarray | None = None

    @property
    def mean_length(self) -> float:
        return self.length_sum / self.games

    @property
    def length_sample_std(self) -> float:
        r = self.games
        if r < 2:
            return 0.0
        # exact integer numerator of (R * sum x^2 - (sum x)^2) / (R (R - 1))
        return math.sqrt((r * self.length_sq_sum - self.length_sum**2) / (r * (r - 1)))

    @property
    def length_mc_error(self) -> float:
        return self.length_sample_std / math.sqrt(self.games)

    @property
    def win_proportion(self) -> tuple[float, ...]:
        return tuple(w / self.games for w in self.wins)

    @property
    def win_proportion_se(self) -> tuple[float, ...]:
        r = self.games
        return tuple(math.sqrt((r * w - w * w) / r**3) for w in self.wins)


@dataclass
class _Tally:
    wins: np.ndarray
    length_sum: int = 0
    length_sq_sum: int = 0
    chip_sums: np.ndarray | None = None


def worker_count() -> int:
    env = os.environ.get("LCR_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_chunk_compiled(config: SimConfig, chunk: int, games: int, horizon: int) -> _Tally:
    n = config.n
    wins = np.zeros(n, dtype=np.int64)
    rows = config.track_chips_turns or 0
    chip_sums = np.zeros((rows, n + 1), dtype=np.int64)
    total, total_sq, status = _play_chunk(
        n, games, chunk_state(config.seed, chunk), config.variant.modified_start, horizon, FACES, wins, chip_sums
    )
    if status < 0:
        raise SimulationDefect(f"chunk {chunk}: a game exceeded {MAX_TRANSITIONS} transitions")
    return _Tally(wins, int(total), int(total_sq), chip_sums if rows else None)


def _run_chunk_python(config: SimConfig, rng: DiceStream, games: int) -> _Tally:
    n = config.n
    tally = _Tally(np.zeros(n, dtype=np.int64))
    rows = config.track_chips_turns
    if rows:
        tally.chip_sums = np.zeros((rows, n + 1), dtype=np.int64)
    for _ in range(games):
        seat, length, trace = simulate_game(n, config.variant, rng, rows)
        tally.wins[seat - 1] += 1
        tally.length_sum += length
        tally.length_sq_sum += length * length
        if rows:
            tally.chip_sums += trace.astype(np.int64)
    return tally


def _run(config: SimConfig, horizon: int, rng_factory, workers: int | None) -> _Tally:
    chunks = config.chunks()
    if rng_factory is not None:
        job = lambda item: _run_chunk_python(config, rng_factory(item[0]), item[1])  # noqa: E731
    else:
        job = lambda item: _run_chunk_compiled(config, item[0], item[1], horizon)  # noqa: E731
    workers = min(workers or worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            tallies = list(pool.map(job, chunks))
    else:
        tallies = [job(item) for item in chunks]
    merged = _Tally(np.zeros(config.n, dtype=np.int64))
    for tally in tallies:
        merged.wins += tally.wins
        merged.length_sum += tally.length_sum
        merged.length_sq_sum += tally.length_sq_sum
        if tally.chip_sums is not None:
            merged.chip_sums = tally.chip_sums if merged.chip_sums is None else merged.chip_sums + tally.chip_sums
    return merged


def run_simulation(
    config: SimConfig,
    workers: int | None = None,
    rng_factory: Callable[[int], DiceStream] | None = None,
) -> SimReport:
    """Play ``config.games`` complete games.

    ``rng_factory(chunk_index)`` swaps the compiled kernel for the pure-Python
    player driven by the returned stream.  Passing ``Xoshiro256.for_chunk``
    with the config's seed reproduces the compiled results exactly.
    """
    tally = _run(config, 0, rng_factory, workers)
    chips = None
    if tally.chip_sums is not None:
        chips = tally.chip_sums / config.games
    return SimReport(
        n=config.n,
        games=config.games,
        seed=config.seed,
        variant=config.variant,
        length_sum=tally.length_sum,
        length_sq_sum=tally.length_sq_sum,
        wins=tuple(int(w) for w in tally.wins),
        chips_by_turn=chips,
    )


def chips_trajectory(config: SimConfig, turns: int, workers: int | None = None) -> np.ndarray:
    """Mean holdings at the start of turns ``1..turns``; shape ``(turns, n + 1)``, center last.

    Games are only played as far as the horizon; games that end earlier
    contribute their final holdings to the remaining turns.
    """
    if not isinstance(turns, int) or turns < 1:
        raise ValueError(f"turns must be >= 1, got {turns!r}")
    tracked = SimConfig(config.n, config.games, config.seed, config.variant, config.chunk_size, turns)
    tally = _run(tracked, turns, None, workers)
    return tally.chip_sums / config.games


def expected_winnings(report, stake: float = 30.0) -> tuple[float, ...]:
    """``stake * n * p_k - stake`` per seat, for an exact or simulated report."""
    if stake <= 0:
        raise ValueError(f"stake must be positive, got {stake}")
    probs = getattr(report, "win_probability", None)
    if probs is None:
        probs = report.win_proportion
    n = len(probs)
    return tuple(stake * n * p - stake for p in probs)
