from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcr.rules import (
    MODIFIED,
    STANDARD,
    GameState,
    RollOutcome,
    apply_roll,
    dice_for,
    first_turn_successors,
    move_table,
    roll_distribution,
    successors,
    winner,
)
from oracles import face_distribution


def outcome(dist, l, c, r):
    (o,) = [o for o in dist if (o.l, o.c, o.r) == (l, c, r)]
    return o.probability


@pytest.mark.parametrize("k, count", [(0, 1), (1, 4), (2, 10), (3, 20)])
def test_outcome_counts(k, count):
    dist = roll_distribution(k)
    assert len(dist) == count
    assert sum(o.probability for o in dist) == 1


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_distribution_matches_face_enumeration(k):
    got = {(o.l, o.c, o.r): o.probability for o in roll_distribution(k)}
    assert got == face_distribution(k)


def test_table_values():
    three = roll_distribution(3)
    assert outcome(three, 1, 1, 1) == Fraction(1, 36)
    assert outcome(three, 0, 0, 0) == Fraction(1, 8)
    assert outcome(three, 3, 0, 0) == Fraction(1, 216)
    assert outcome(three, 0, 2, 0) == Fraction(1, 24)
    two = roll_distribution(2)
    assert outcome(two, 0, 0, 0) == Fraction(1, 4)
    assert outcome(two, 1, 1, 0) == Fraction(1, 18)
    assert roll_distribution(0) == (RollOutcome(0, 0, 0, Fraction(1)),)


@pytest.mark.parametrize("k", [-1, 4, 2.0])
def test_rejects_bad_dice(k):
    with pytest.raises(ValueError):
        roll_distribution(k)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_expected_pass_is_k_over_six(k):
    dist = roll_distribution(k)
    for attr in "lcr":
        assert sum(o.probability * getattr(o, attr) for o in dist) == Fraction(k, 6)


@pytest.mark.parametrize("held, dice", [(5, 3), (0, 0), (2, 2)])
def test_dice_for(held, dice):
    state = GameState((held, 9 - held, 0), 0, 1)
    assert dice_for(state) == dice


def test_apply_roll_examples():
    s = GameState((2, 3, 1), 3, 1)
    assert apply_roll(s, RollOutcome(0, 0, 2, Fraction(1, 36))) == GameState((0, 5, 1), 3, 2)
    assert apply_roll(s, RollOutcome(0, 0, 0, Fraction(1, 4))) == GameState((2, 3, 1), 3, 2)
    two = GameState((3, 3), 0, 1)
    assert apply_roll(two, RollOutcome(1, 0, 1, Fraction(1, 12))) == GameState((1, 5), 0, 2)


def test_apply_roll_left_goes_to_previous_seat():
    s = GameState((3, 3, 3), 0, 1)
    assert apply_roll(s, RollOutcome(1, 0, 0, Fraction(1, 8))) == GameState((2, 3, 4), 0, 2)


def test_apply_roll_rejects_overdraw():
    with pytest.raises(ValueError):
        apply_roll(GameState((1, 4, 4), 0, 1), RollOutcome(0, 2, 0, Fraction(1, 36)))


def test_successors_of_worked_state():
    succ = successors(GameState((2, 3, 1), 3, 1))
    assert len(succ) == 10
    assert dict(succ)[GameState((0, 5, 1), 3, 2)] == Fraction(1, 36)


def test_skip_when_no_chips():
    assert successors(GameState((0, 2, 4), 3, 1)) == [(GameState((0, 2, 4), 3, 2), 1)]


def test_one_die_successors():
    succ = successors(GameState((1, 1, 1), 6, 2))
    assert sorted(p for _, p in succ) == [Fraction(1, 6)] * 3 + [Fraction(1, 2)]


def test_successors_rejects_absorbing():
    with pytest.raises(ValueError):
        successors(GameState((0, 0, 5), 4, 1))


def test_two_player_duplicates_merge():
    succ = successors(GameState((3, 3), 0, 1))
    states = [s for s, _ in succ]
    assert len(states) == len(set(states))
    # (1,0,0), (0,0,1) both move one chip to the opponent
    assert dict(succ)[GameState((2, 4), 0, 2)] == Fraction(1, 8) * 2


def test_modified_first_roll_folds_left():
    start = GameState.initial(3)
    mod = dict(first_turn_successors(start, MODIFIED))
    assert GameState((2, 3, 4), 0, 2) not in mod  # a lone L would feed seat 3
    p_111 = Fraction(1, 36)
    p_011 = Fraction(1, 12)  # (0,1,1) with one hold
    assert mod[apply_roll(start, RollOutcome(0, 1, 1, 0))] == p_111 + p_011
    assert sum(mod.values()) == 1
    assert first_turn_successors(start, STANDARD) == successors(start)


def test_first_turn_requires_initial_state():
    with pytest.raises(ValueError):
        first_turn_successors(GameState((2, 4, 3), 0, 1), MODIFIED)


def _mean_chips(dist, n):
    return [sum(p * s.chips[k] for s, p in dist) for k in range(n)], sum(p * s.center for s, p in dist)


def test_expected_chips_after_first_roll():
    mod, pot = _mean_chips(first_turn_successors(GameState.initial(6), MODIFIED), 6)
    assert mod == [2, Fraction(7, 2), 3, 3, 3, 3] and pot == Fraction(1, 2)
    std, _ = _mean_chips(first_turn_successors(GameState.initial(6), STANDARD), 6)
    assert std == [Fraction(3, 2), Fraction(7, 2), 3, 3, 3, Fraction(7, 2)]


@pytest.mark.parametrize(
    "chips, center, turn, seat",
    [((0, 0, 5), 4, 2, 3), ((3, 3, 3), 0, 1, None), ((1, 0, 0, 0), 11, 4, 1)],
)
def test_winner(chips, center, turn, seat):
    assert winner(GameState(chips, center, turn)) == seat


@pytest.mark.parametrize(
    "chips, center, turn",
    [((3,), 0, 1), ((3, 3), -1, 1), ((3, 3), 0, 3), ((3, 2), 0, 1), ((0, 0), 6, 1)],
)
def test_invalid_states(chips, center, turn):
    with pytest.raises(ValueError):
        GameState(chips, center, turn)


def test_move_table_merges_exactly():
    for n in (2, 3, 5):
        for k in (1, 2, 3):
            table = move_table(k, n)
            assert sum(p for *_, p in table) == 1
            assert len({m[:3] for m in table}) == len(table)
    assert len(move_table(3, 2)) == 10  # (left+right, center) pairs


@st.composite
def live_states(draw):
    n = draw(st.integers(2, 6))
    total = 3 * n
    cuts = sorted(draw(st.lists(st.integers(0, total), min_size=n, max_size=n)))
    parts = [b - a for a, b in zip([0, *cuts], [*cuts, total])]
    chips, center = tuple(parts[:n]), parts[n]
    if center == total or sum(1 for c in chips if c) < 2:
        chips = (total - center - 1, 1) + (0,) * (n - 2) if center < total - 1 else (1, 1) + (0,) * (n - 2)
        center = total - sum(chips)
    turn = draw(st.integers(1, n))
    return GameState(chips, center, turn)


@settings(max_examples=300, deadline=None)
@given(live_states())
def test_successor_invariants(state):
    succ = successors(state)
    assert sum(p for _, p in succ) == 1
    for nxt, p in succ:
        assert p > 0
        assert sum(nxt.chips) + nxt.center == sum(state.chips) + state.center
        assert nxt.center >= state.center
        assert nxt.turn == state.turn % state.n + 1
