import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from brainnet_sim.errors import ConfigurationError, InvalidStateError, ProtocolError
from brainnet_sim.game import (
    LINE_WIDTH,
    SHAPE_CATALOG,
    BlockShape,
    Decision,
    FallStage,
    GapLine,
    Role,
    TrialState,
    apply_decision,
    correct_action,
    fits,
    generate_schedule,
    make_trial,
    render_view,
    score_session,
    score_trial,
)


def _line_cleared(block_grid, gap):
    """Independent geometry: drop the bottom row into the line cell by cell."""
    line = list(gap.occupancy)
    for i, cell in enumerate(block_grid[-1]):
        if cell:
            if line[gap.column + i]:
                return False
            line[gap.column + i] = 1
    return all(line)


def test_catalog_shapes_are_asymmetric():
    for cells in SHAPE_CATALOG:
        b = BlockShape(cells)
        assert b.rotated().grid != b.grid
        assert b.rotated().bottom_row != b.bottom_row


@pytest.mark.parametrize("cells", SHAPE_CATALOG)
def test_double_rotation_restores_grid(cells):
    b = BlockShape(cells)
    assert b.rotated().rotated() == b
    assert b.rotated().rotated().grid == b.grid


def test_schedule_counts_default():
    s = generate_schedule(7)
    assert len(s) == 16
    assert sum(t.requires_rotation for t in s) == 8
    assert sum(t.requires_rotation for t in s.trials[:8]) == 4
    assert sum(t.requires_rotation for t in s.trials[8:]) == 4


def test_schedule_balanced_for_many_seeds():
    for seed in range(1000):
        s = generate_schedule(seed)
        assert sum(t.requires_rotation for t in s.trials[:8]) == 4
        assert sum(t.requires_rotation for t in s.trials[8:]) == 4


def test_schedule_deterministic():
    a, b = generate_schedule(42), generate_schedule(42)
    assert a == b
    assert json.dumps([t.to_dict() for t in a]) == json.dumps([t.to_dict() for t in b])
    assert generate_schedule(43) != a


@pytest.mark.parametrize("n", [0, 6, 10, -4])
def test_schedule_rejects_bad_sizes(n):
    with pytest.raises(ConfigurationError):
        generate_schedule(1, n)


def test_schedule_ground_truth_matches_geometry():
    for seed in range(200):
        for t in generate_schedule(seed):
            assert _line_cleared(t.block.grid, t.gap) == (not t.requires_rotation)
            assert _line_cleared(t.block.rotated().grid, t.gap) == t.requires_rotation


def test_correct_action_identity_and_complement():
    aligned = make_trial(0, SHAPE_CATALOG[0], 0, False, 2)
    misaligned = make_trial(1, SHAPE_CATALOG[0], 0, True, 2)
    assert correct_action(aligned) is Decision.NO_ROTATE
    assert correct_action(misaligned) is Decision.ROTATE


def test_correct_action_rejects_ambiguous_states():
    block = BlockShape(((1, 0), (1, 1)))
    neither = TrialState(0, 1, block, GapLine((0,) * LINE_WIDTH, 2), FallStage.TOP, False)
    with pytest.raises(InvalidStateError):
        correct_action(neither)
    # a symmetric block fits either way
    sym = BlockShape(((1, 1), (1, 1)))
    line = [1] * LINE_WIDTH
    line[2] = line[3] = 0
    both = TrialState(0, 1, sym, GapLine(tuple(line), 2), FallStage.TOP, False)
    with pytest.raises(InvalidStateError):
        correct_action(both)


def test_round_two_always_recoverable():
    # every (requires_rotation, round-1 action) combination, for every generated trial
    for seed in range(50):
        for t in generate_schedule(seed):
            for first in Decision:
                mid = apply_decision(t, first)
                assert mid.round == 2 and mid.fall_stage is FallStage.HALFWAY
                final = apply_decision(mid, correct_action(mid))
                assert score_trial(final) == 1
                assert _line_cleared(final.block.grid, final.gap)


def test_round_two_flip_after_round_one():
    t = make_trial(0, SHAPE_CATALOG[1], 0, True, 3)
    assert correct_action(t) is Decision.ROTATE
    assert correct_action(apply_decision(t, Decision.ROTATE)) is Decision.NO_ROTATE
    assert correct_action(apply_decision(t, Decision.NO_ROTATE)) is Decision.ROTATE


def test_apply_decision_transitions():
    t = make_trial(0, SHAPE_CATALOG[2], 180, True, 1)
    rr = apply_decision(apply_decision(t, Decision.ROTATE), Decision.ROTATE)
    assert rr.block.orientation == t.block.orientation
    assert rr.fall_stage is FallStage.DROPPED
    nn = apply_decision(apply_decision(t, Decision.NO_ROTATE), Decision.NO_ROTATE)
    assert nn.block == t.block and nn.fall_stage is FallStage.DROPPED
    cleared = apply_decision(apply_decision(t, Decision.ROTATE), Decision.NO_ROTATE)
    assert score_trial(cleared) == 1
    assert _line_cleared(cleared.block.grid, cleared.gap)


def test_apply_to_dropped_block_is_protocol_error():
    t = make_trial(0, SHAPE_CATALOG[0], 0, False, 1)
    dropped = apply_decision(apply_decision(t, Decision.NO_ROTATE), Decision.NO_ROTATE)
    with pytest.raises(ProtocolError):
        apply_decision(dropped, Decision.ROTATE)


def test_score_requires_drop():
    t = make_trial(0, SHAPE_CATALOG[0], 0, False, 1)
    with pytest.raises(ProtocolError):
        score_trial(t)


def test_session_scores():
    sched = generate_schedule(3)
    good = [apply_decision(apply_decision(t, correct_action(t)), Decision.NO_ROTATE) for t in sched]
    bad = [apply_decision(apply_decision(t, correct_action(t).flipped()), Decision.NO_ROTATE) for t in sched]
    assert score_session(good) == 16
    assert score_session(bad) == 0
    assert score_session(good[:13] + bad[13:]) / 16 == 0.8125


def test_views_hide_gap_from_receiver():
    t = generate_schedule(5)[0]
    rv, sv = render_view(t, Role.RECEIVER), render_view(t, Role.SENDER)
    assert rv.gap is None and sv.gap == t.gap
    assert "gap" not in rv.to_dict() and "occupancy" not in json.dumps(rv.to_dict())
    assert sv.to_dict()["gap"]["occupancy"] == list(t.gap.occupancy)
    assert rv.round == sv.round == 1 and rv.fall_stage is FallStage.TOP
    assert rv.outcome is None


def test_dropped_view_shows_outcome_to_all():
    t = generate_schedule(5)[0]
    done = apply_decision(apply_decision(t, correct_action(t)), Decision.NO_ROTATE)
    for role in Role:
        assert render_view(done, role).outcome == 1


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), idx=st.integers(0, 15), d=st.sampled_from(list(Decision)))
def test_rotation_involution_property(seed, idx, d):
    t = generate_schedule(seed)[idx]
    once = apply_decision(t, Decision.ROTATE)
    assert apply_decision(once, Decision.ROTATE).block.orientation == t.block.orientation
    assert TrialState.from_dict(json.loads(json.dumps(t.to_dict()))) == t


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_receiver_view_never_serializes_gap(seed):
    for t in generate_schedule(seed):
        for d1, d2 in itertools.product(Decision, repeat=2):
            states = [t, apply_decision(t, d1)]
            states.append(apply_decision(states[1], d2))
            for s in states:
                text = json.dumps(render_view(s, Role.RECEIVER).to_dict())
                assert "gap" not in text and "occupancy" not in text


def test_fits_rejects_out_of_range_column():
    assert not fits(BlockShape(SHAPE_CATALOG[0]), GapLine((1,) * LINE_WIDTH, LINE_WIDTH - 1))
