import math

import numpy as np
import pytest
from scipy import sparse

import lcr.solver as solver
from lcr.rules import MODIFIED, STANDARD, GameState, successors
from lcr.solver import (
    SolverError,
    build_transition_system,
    expected_chips_exact,
    first_step_distribution,
    load_system,
    save_system,
    solve_absorption,
    solve_modified_start,
)
from oracles import dense_analysis, length_distribution


def test_system_size(systems):
    sys3 = systems(3)
    assert sys3.meta.t + sys3.meta.a == 657
    assert sys3.q.shape == (576, 576) and sys3.r.shape == (576, 81)


def test_worked_edge(systems):
    sys3 = systems(3)
    space = sys3.space
    i = space.rank(GameState((2, 3, 1), 3, 1))
    j = space.rank(GameState((0, 5, 1), 3, 2))
    assert sys3.q[i, j] == pytest.approx(1 / 36, abs=1e-16)
    assert sys3.q[i].nnz + sys3.r[i].nnz == 10


@pytest.mark.parametrize("n", [2, 3, 4])
def test_rows_stochastic(systems, n):
    system = systems(n)
    full = sparse.hstack([system.q, system.r]).tocsr()
    sums = np.asarray(full.sum(axis=1)).ravel()
    assert np.abs(sums - 1).max() < 1e-12
    counts = np.diff(full.indptr)
    assert counts.min() >= 1 and counts.max() <= 20


@pytest.mark.parametrize("n", [3, 4])  # with two players an empty seat means the game is over
def test_zero_chip_rows(systems, n):
    system = systems(n)
    chips, _, turn = system.space.state_arrays
    t = system.meta.t
    idle = np.flatnonzero(chips[np.arange(t), turn[:t] - 1] == 0)
    assert len(idle)
    full = sparse.hstack([system.q, system.r]).tocsr()
    for i in idle[:500]:
        row = full[i]
        assert row.nnz == 1 and row.data[0] == 1.0


def test_rows_match_rules(systems):
    system = systems(3)
    space = system.space
    full = sparse.hstack([system.q, system.r]).tocsr()
    for i in range(0, system.meta.t, 7):
        expected = {space.rank(s): float(p) for s, p in successors(space.unrank(i))}
        row = full[i]
        assert dict(zip(row.indices.tolist(), row.data.tolist())) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_level_block_structure(systems, n):
    system = systems(n)
    coo = system.q.tocoo()
    bounds = system.space.level_bounds()
    level = np.empty(system.meta.t, dtype=int)
    for c, (lo, hi) in enumerate(bounds):
        level[lo:hi] = c
    assert (level[coo.col] >= level[coo.row]).all()


def test_absorbing_winners(systems):
    system = systems(3)
    space = system.space
    for j, seat in enumerate(system.absorbing_winner):
        s = space.unrank(system.meta.t + j)
        assert s.chips[seat - 1] > 0 and sum(s.chips) == s.chips[seat - 1]


@pytest.mark.parametrize(
    "n, length, sd, wins",
    [
        (2, 5.8, 3.7, (0.382, 0.618)),
        (3, 18.9, 8.1, (0.307, 0.328, 0.365)),
        (4, 33.9, 12.1, (0.239, 0.243, 0.255, 0.262)),
    ],
)
def test_published_values(systems, n, length, sd, wins):
    report = solve_absorption(systems(n))
    assert round(report.expected_length, 1) == length
    assert round(report.length_std_dev, 1) == sd
    assert tuple(round(p, 3) for p in report.win_probability) == wins
    assert sum(report.win_probability) == pytest.approx(1, abs=1e-9)
    assert report.solver_residual < 1e-10


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("modified", [False, True])
def test_dense_oracle(systems, n, modified):
    system = systems(n)
    report = solve_modified_start(system) if modified else solve_absorption(system)
    mean, sd, wins = dense_analysis(n, modified)
    assert report.expected_length == pytest.approx(mean, abs=1e-10)
    assert report.length_std_dev == pytest.approx(sd, abs=1e-9)
    assert np.allclose(report.win_probability, wins, atol=1e-10)


def test_variance_matches_length_distribution(systems):
    probs = length_distribution(2, 400)
    k = np.arange(len(probs))
    mean = probs @ k
    var = probs @ (k - mean) ** 2
    report = solve_absorption(systems(2))
    assert report.expected_length == pytest.approx(mean, abs=1e-10)
    assert report.length_std_dev**2 == pytest.approx(var, abs=1e-9)


def test_modified_two_player(systems):
    report = solve_modified_start(systems(2))
    assert report.variant == MODIFIED
    # player 1 keeps its L chips on the opening roll, which helps seat 1
    assert report.win_probability[1] < 0.618
    assert report.win_probability == pytest.approx((0.48289731, 0.51710269), abs=1e-8)


def test_modified_reduces_spread(systems):
    for n in (3, 4):
        std = solve_absorption(systems(n)).win_probability
        mod = solve_modified_start(systems(n)).win_probability
        assert max(mod) - min(mod) < max(std) - min(std)


@pytest.mark.parametrize("variant", [STANDARD, MODIFIED])
def test_first_step_distribution_sums_to_one(systems, variant):
    assert first_step_distribution(systems(4), variant).sum() == pytest.approx(1, abs=1e-15)


def test_fairness_trend(systems):
    w3 = solve_absorption(systems(3)).win_probability
    assert w3[0] < w3[1] < w3[2]
    w4 = solve_absorption(systems(4)).win_probability
    assert max(w4) == w4[3] and min(w4) == w4[0]


def test_start_must_be_transient(systems):
    system = systems(2)
    with pytest.raises(ValueError):
        solve_absorption(system, system.meta.t)


def test_build_rejects_range():
    with pytest.raises(ValueError):
        build_transition_system(1)
    with pytest.raises(ValueError):
        build_transition_system(7)
    with pytest.raises(MemoryError):
        build_transition_system(4, memory_budget=1000)


def test_residual_failure_is_explicit(systems, monkeypatch):
    monkeypatch.setattr(solver, "RESIDUAL_TOL", 0.0)
    with pytest.raises(SolverError):
        solve_absorption(systems(3))


def test_gauss_seidel_blocks_agree(systems, monkeypatch):
    expected = solve_absorption(systems(4))
    monkeypatch.setattr(solver, "LU_BLOCK_LIMIT", 0)
    fresh = build_transition_system(4)
    got = solve_absorption(fresh)
    assert got.expected_length == pytest.approx(expected.expected_length, abs=1e-9)
    assert np.allclose(got.win_probability, expected.win_probability, atol=1e-11)


def test_expected_chips_first_rounds(systems):
    table = expected_chips_exact(systems(3), MODIFIED, 5)
    assert table[0].tolist() == [3, 3, 3, 0]
    assert np.allclose(table[1], [2, 3.5, 3, 0.5])
    assert np.allclose(table.sum(axis=1), 9)


def test_expected_chips_conserve(systems):
    for variant in (STANDARD, MODIFIED):
        table = expected_chips_exact(systems(4), variant, 200)
        assert np.abs(table.sum(axis=1) - 12).max() < 1e-9


def _seat1_turn8_oracle():
    # seat 1 at turn 7 holds 3 - Bin(3, 1/3) + Bin(6, 1/6) chips, then rolls min(., 3) dice
    def pmf(k, p):
        return {i: math.comb(k, i) * p**i * (1 - p) ** (k - i) for i in range(k + 1)}

    dice = sum(pl * pg * min(3 - lost + got, 3) for lost, pl in pmf(3, 1 / 3).items() for got, pg in pmf(6, 1 / 6).items())
    return 3 - dice / 2


def test_expected_chips_six_players(systems):
    table = expected_chips_exact(systems(6), MODIFIED, 10)
    assert np.allclose(table[1, :6], [2, 3.5, 3, 3, 3, 3], atol=1e-12)
    assert np.allclose(table[6, :6], [3, 2.5, 2.5, 2.5, 2.5, 2], atol=1e-12)
    # the closed form ignores games already over by turn 7 (probability ~1e-10)
    assert table[7, 0] == pytest.approx(_seat1_turn8_oracle(), abs=1e-9)
    assert np.abs(table.sum(axis=1) - 18).max() < 1e-9


def test_expected_chips_rejects_turns(systems):
    with pytest.raises(ValueError):
        expected_chips_exact(systems(2), STANDARD, 0)


def test_cache_roundtrip(systems, tmp_path):
    system = systems(3)
    path = tmp_path / "lcr3.bin"
    save_system(system, path)
    raw = path.read_bytes()
    assert raw[:4] == b"LCRT" and raw[4] == 1
    loaded = load_system(path)
    assert (loaded.q != system.q).nnz == 0 and (loaded.r != system.r).nnz == 0
    assert solve_absorption(loaded) == solve_absorption(system)


def test_cache_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ValueError):
        load_system(path)
