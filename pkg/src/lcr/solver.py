"""Absorbing-chain analysis of the full state graph.

The transient block ``Q`` and absorbing block ``R`` are assembled as CSR
matrices.  Neither the fundamental matrix ``N = (I - Q)^-1`` nor ``B = NR`` is
ever formed: a forward solve gives ``w = N 1`` and a transpose solve gives the
rows of ``N`` weighted by the initial distribution, which is all the reported
quantities need.

Because the center pot never shrinks, ``I - Q`` is block upper triangular over
center levels, so both solves proceed one level at a time and only the
diagonal blocks are factorized.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .rules import MAX_DICE, STANDARD, GameState, RuleVariant, first_turn_successors, move_table
from .states import StateSpace, StateSpaceMeta, state_space

log = logging.getLogger(__name__)

DEFAULT_MAX_PLAYERS = 6
DEFAULT_MEMORY_BUDGET = 4 * 2**30
RESIDUAL_TOL = 1e-10
MAX_CHIP_TURNS = 10_000
# diagonal blocks above this many rows are solved by Gauss-Seidel instead of LU
LU_BLOCK_LIMIT = 2_000
GS_TOL = 1e-12
GS_MAX_SWEEPS = 20_000


class SolverError(RuntimeError):
    """A linear solve failed or missed the residual tolerance."""


@dataclass(frozen=True, eq=False)
class TransitionSystem:
    meta: StateSpaceMeta
    q: sparse.csr_matrix
    r: sparse.csr_matrix
    absorbing_winner: np.ndarray  # 1-based seat for every absorbing column

    @property
    def n(self) -> int:
        return self.meta.n

    @property
    def space(self) -> StateSpace:
        return state_space(self.meta.n)

    @cached_property
    def _levels(self) -> "_LevelSolver":
        return _LevelSolver(self.q, self.space.level_bounds())


@dataclass(frozen=True)
class ExactReport:
    n: int
    variant: RuleVariant
    expected_length: float
    length_std_dev: float
    win_probability: tuple[float, ...]
    solver_residual: float


def estimate_memory(n: int) -> int:
    """Rough peak bytes for assembling and factorizing the ``n``-player system."""
    states = state_space(n).total
    # up to 20 entries per row, a few temporaries of (int64 row, int64 col, float64) each
    return states * 20 * 24 * 3


def build_transition_system(
    n: int, max_players: int = DEFAULT_MAX_PLAYERS, memory_budget: int = DEFAULT_MEMORY_BUDGET
) -> TransitionSystem:
    if not isinstance(n, int) or not 2 <= n <= max_players:
        raise ValueError(f"players must be in 2..{max_players}, got {n!r}")
    needed = estimate_memory(n)
    if needed > memory_budget:
        raise MemoryError(f"{n}-player system needs ~{needed / 2**30:.1f} GiB, budget is {memory_budget / 2**30:.1f} GiB")

    space = state_space(n)
    t, a = space.t, space.a
    chips, center, turn = space.state_arrays
    chips = chips[:t].astype(np.int64)
    center = center[:t].astype(np.int64)
    turn = turn[:t].astype(np.int64)

    rows = np.arange(t, dtype=np.int64)
    mover = turn - 1
    held = chips[rows, mover]
    dice = np.minimum(held, MAX_DICE)
    next_turn = turn % n + 1
    left = (mover - 1) % n
    right = (mover + 1) % n

    row_parts, col_parts, p_parts = [], [], []
    for d in range(MAX_DICE + 1):
        sel = np.flatnonzero(dice == d)
        if not len(sel):
            continue
        base = chips[sel]
        moves = move_table(d, n) if d else ((0, 0, 0, 1),)
        for to_left, to_center, to_right, p in moves:
            nxt = base.copy()
            idx = np.arange(len(sel))
            nxt[idx, mover[sel]] -= to_left + to_center + to_right
            np.add.at(nxt, (idx, left[sel]), to_left)
            np.add.at(nxt, (idx, right[sel]), to_right)
            col_parts.append(space.rank_many(nxt, center[sel] + to_center, next_turn[sel]))
            row_parts.append(sel)
            p_parts.append(np.full(len(sel), float(p)))
    rows_all = np.concatenate(row_parts)
    cols_all = np.concatenate(col_parts)
    p_all = np.concatenate(p_parts)
    del row_parts, col_parts, p_parts

    to_q = cols_all < t
    q = sparse.csr_matrix((p_all[to_q], (rows_all[to_q], cols_all[to_q])), shape=(t, t))
    r = sparse.csr_matrix((p_all[~to_q], (rows_all[~to_q], cols_all[~to_q] - t)), shape=(t, a))
    winners = _absorbing_winners(space)
    log.debug("assembled n=%d: t=%d a=%d nnz(Q)=%d nnz(R)=%d", n, t, a, q.nnz, r.nnz)
    return TransitionSystem(space.meta, q, r, winners)


def _absorbing_winners(space: StateSpace) -> np.ndarray:
    n = space.n
    pos = (np.arange(space.a) // n) % n
    return (n - pos).astype(np.int64)


class _LevelSolver:
    """Block back/forward substitution for ``(I - Q)`` over center levels."""

    def __init__(self, q: sparse.csr_matrix, bounds: list[tuple[int, int]]):
        self.q = q
        self.qt = q.T.tocsr()
        self.bounds = [(lo, hi) for lo, hi in bounds if hi > lo]
        self.blocks = []
        for lo, hi in self.bounds:
            block = (sparse.identity(hi - lo, format="csc") - q[lo:hi, lo:hi]).tocsc()
            if hi - lo <= LU_BLOCK_LIMIT:
                self.blocks.append(splu(block))
            else:
                self.blocks.append(block.tocsr())

    def solve(self, b: np.ndarray, transpose: bool = False) -> np.ndarray:
        x = np.zeros_like(b, dtype=float)
        order = self.bounds if transpose else self.bounds[::-1]
        blocks = self.blocks if transpose else self.blocks[::-1]
        coupling = self.qt if transpose else self.q
        for (lo, hi), block in zip(order, blocks):
            # x is still zero on this level, so only already-solved levels contribute
            rhs = b[lo:hi] + coupling[lo:hi] @ x
            if isinstance(block, sparse.csr_matrix):
                x[lo:hi] = _gauss_seidel(block.T.tocsr() if transpose else block, rhs)
            else:
                x[lo:hi] = block.solve(rhs, trans="T" if transpose else "N")
        return x


def _gauss_seidel(a: sparse.csr_matrix, b: np.ndarray) -> np.ndarray:
    from pyamg.relaxation.relaxation import gauss_seidel

    x = np.zeros_like(b)
    scale = max(1.0, float(np.abs(b).max()))
    for sweep in range(0, GS_MAX_SWEEPS, 10):
        gauss_seidel(a, x, b, iterations=10, sweep="symmetric")
        res = float(np.abs(b - a @ x).max())
        if not math.isfinite(res):
            break
        if res <= GS_TOL * scale:
            return x
    raise SolverError(f"Gauss-Seidel stalled at residual {res:.3e} after {sweep + 10} sweeps")


def _check(residual: float, what: str) -> None:
    if not math.isfinite(residual) or residual > RESIDUAL_TOL:
        raise SolverError(f"{what} residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")


def _analyze(system: TransitionSystem, initial: np.ndarray, variant: RuleVariant, steps_taken: int) -> ExactReport:
    """Report for a chain started from ``initial`` (a distribution over all states)."""
    t = system.meta.t
    n = system.n
    pi_t, pi_a = initial[:t], initial[t:]
    levels = system._levels
    ones = np.ones(t)
    w = levels.solve(ones)
    y = levels.solve(pi_t, transpose=True)
    identity = sparse.identity(t, format="csr")
    res_w = float(np.abs((identity - system.q) @ w - ones).max())
    res_y = float(np.abs((identity - system.q).T @ y - pi_t).max()) if t else 0.0
    residual = max(res_w, res_y)
    _check(res_w, "expected-steps solve")
    _check(res_y, "transpose solve")

    mean_steps = float(pi_t @ w)
    second = 2.0 * float(y @ w) - mean_steps  # E[steps^2]
    variance = max(second - mean_steps**2, 0.0)

    absorbed = system.r.T @ y + pi_a
    wins = np.bincount(system.absorbing_winner - 1, weights=absorbed, minlength=n)
    return ExactReport(
        n=n,
        variant=variant,
        expected_length=mean_steps + steps_taken,
        length_std_dev=math.sqrt(variance),
        win_probability=tuple(float(p) for p in wins),
        solver_residual=residual,
    )


def solve_absorption(system: TransitionSystem, start: int | None = None) -> ExactReport:
    """Expected length, its standard deviation and win probabilities from ``start``."""
    start = system.meta.start if start is None else start
    if not 0 <= start < system.meta.t:
        raise ValueError(f"start index {start} is not transient")
    initial = np.zeros(system.meta.total)
    initial[start] = 1.0
    return _analyze(system, initial, STANDARD, 0)


def first_step_distribution(system: TransitionSystem, variant: RuleVariant) -> np.ndarray:
    """Distribution over all states right after player 1's opening roll."""
    space = system.space
    pi = np.zeros(system.meta.total)
    for state, p in first_turn_successors(GameState.initial(system.n), variant):
        pi[space.rank(state)] += float(p)
    return pi


def solve_modified_start(system: TransitionSystem) -> ExactReport:
    from .rules import MODIFIED

    return _analyze(system, first_step_distribution(system, MODIFIED), MODIFIED, 1)


def analyze(n: int, variant: RuleVariant = STANDARD, **build_kwargs) -> ExactReport:
    system = build_transition_system(n, **build_kwargs)
    return solve_modified_start(system) if variant.modified_start else solve_absorption(system)


def expected_chips_exact(system: TransitionSystem, variant: RuleVariant, turns: int) -> np.ndarray:
    """Expected chips at the start of turns ``1..turns``.

    Returns a ``(turns, n + 1)`` array: one column per seat, then the center.
    Finished games stay in their absorbing state.
    """
    if not isinstance(turns, int) or not 1 <= turns <= MAX_CHIP_TURNS:
        raise ValueError(f"turns must be in 1..{MAX_CHIP_TURNS}, got {turns!r}")
    t = system.meta.t
    chips, center, _ = system.space.state_arrays
    holdings = np.column_stack([chips, center]).astype(float)
    qt = system.q.T.tocsr()
    rt = system.r.T.tocsr()

    pi = np.zeros(system.meta.total)
    pi[system.meta.start] = 1.0
    out = np.empty((turns, system.n + 1))
    for j in range(turns):
        out[j] = pi @ holdings
        if j == 0:
            pi = first_step_distribution(system, variant)
        else:
            pi_t = pi[:t]
            pi = np.concatenate([qt @ pi_t, rt @ pi_t + pi[t:]])
    return out


# -- on-disk cache --------------------------------------------------------
#
# Layout, all little-endian:
#   b"LCRT"  u8 version  u32 n  u64 t  u64 a
#   Q block: u64 nnz, i64[t+1] indptr, i32[nnz] indices, f64[nnz] data
#   R block: same layout with t rows

CACHE_MAGIC = b"LCRT"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sBIQQ")


def save_system(system: TransitionSystem, path: str | Path) -> None:
    meta = system.meta
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, meta.n, meta.t, meta.a))
        for m in (system.q, system.r):
            m = m.tocsr()
            fh.write(struct.pack("<Q", m.nnz))
            fh.write(m.indptr.astype("<i8").tobytes())
            fh.write(m.indices.astype("<i4").tobytes())
            fh.write(m.data.astype("<f8").tobytes())


def load_system(path: str | Path) -> TransitionSystem:
    data = Path(path).read_bytes()
    magic, version, n, t, a = _HEADER.unpack_from(data, 0)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise ValueError(f"{path}: not an LCRT v{CACHE_VERSION} cache")
    space = state_space(n)
    if (t, a) != (space.t, space.a):
        raise ValueError(f"{path}: header does not match the {n}-player state space")
    offset = _HEADER.size
    blocks = []
    for cols in (t, a):
        (nnz,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        indptr = np.frombuffer(data, "<i8", t + 1, offset)
        offset += 8 * (t + 1)
        indices = np.frombuffer(data, "<i4", nnz, offset)
        offset += 4 * nnz
        values = np.frombuffer(data, "<f8", nnz, offset)
        offset += 8 * nnz
        blocks.append(sparse.csr_matrix((values.copy(), indices.copy(), indptr.copy()), shape=(t, cols)))
    return TransitionSystem(space.meta, blocks[0], blocks[1], _absorbing_winners(space))
