"""Tetris-like rotate/don't-rotate task.

A trial holds one block above a single partially filled line.  The block
can be rotated by 180 degrees; exactly one of its two orientations drops
cleanly into the gap.  Each trial has two rounds: the block falls halfway
after the first decision and is dropped after the second.

All values here are immutable; transitions return new states.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InvalidStateError, ProtocolError

LINE_WIDTH = 8


class Decision(enum.Enum):
    ROTATE = "rotate"
    NO_ROTATE = "no_rotate"

    @property
    def bit(self) -> int:
        """1 for rotate, 0 for do-not-rotate."""
        return 1 if self is Decision.ROTATE else 0

    @classmethod
    def from_bit(cls, bit) -> "Decision":
        return cls.ROTATE if int(bit) else cls.NO_ROTATE

    def flipped(self) -> "Decision":
        return Decision.NO_ROTATE if self is Decision.ROTATE else Decision.ROTATE


class FallStage(enum.Enum):
    TOP = "top"
    HALFWAY = "halfway"
    DROPPED = "dropped"

    def next(self) -> "FallStage":
        if self is FallStage.TOP:
            return FallStage.HALFWAY
        if self is FallStage.HALFWAY:
            return FallStage.DROPPED
        raise ProtocolError("block has already been dropped")


class Role(enum.Enum):
    SENDER = "sender"
    RECEIVER = "receiver"


def _rot180(cells):
    return tuple(tuple(reversed(row)) for row in reversed(cells))


@dataclass(frozen=True)
class BlockShape:
    """Occupancy grid in its base orientation plus the current orientation."""

    cells: tuple
    orientation: int = 0

    def __post_init__(self):
        if self.orientation not in (0, 180):
            raise ValueError(f"orientation must be 0 or 180, got {self.orientation}")

    @property
    def grid(self) -> tuple:
        """Occupancy as currently oriented (row 0 is the top)."""
        return self.cells if self.orientation == 0 else _rot180(self.cells)

    @property
    def width(self) -> int:
        return len(self.cells[0])

    @property
    def bottom_row(self) -> tuple:
        return self.grid[-1]

    def rotated(self) -> "BlockShape":
        return replace(self, orientation=180 - self.orientation)

    def to_dict(self) -> dict:
        return {"cells": [list(r) for r in self.cells], "orientation": self.orientation}

    @classmethod
    def from_dict(cls, d) -> "BlockShape":
        return cls(tuple(tuple(int(v) for v in r) for r in d["cells"]), int(d["orientation"]))


# L-trominoes in a 2x2 footprint: a vertical domino with one protruding cell.
SHAPE_CATALOG = (
    ((1, 0), (1, 1)),
    ((0, 1), (1, 1)),
    ((1, 1), (1, 0)),
    ((1, 1), (0, 1)),
)


@dataclass(frozen=True)
class GapLine:
    """The bottom line; ``occupancy[i] == 1`` marks an already filled cell.

    ``column`` is the leftmost column the falling block lands on.
    """

    occupancy: tuple
    column: int

    def to_dict(self) -> dict:
        return {"occupancy": list(self.occupancy), "column": self.column}

    @classmethod
    def from_dict(cls, d) -> "GapLine":
        return cls(tuple(int(v) for v in d["occupancy"]), int(d["column"]))


def fits(block: BlockShape, gap: GapLine) -> bool:
    """True iff dropping ``block`` as oriented completes the line."""
    line = np.array(gap.occupancy, dtype=int)
    w = block.width
    if gap.column < 0 or gap.column + w > line.size:
        return False
    line[gap.column : gap.column + w] += np.array(block.bottom_row, dtype=int)
    return bool(np.all(line == 1))


def action_for(block: BlockShape, gap: GapLine) -> Decision:
    """Orientation-fixing action for a block over a gap."""
    now, flipped = fits(block, gap), fits(block.rotated(), gap)
    if now == flipped:
        which = "both" if now else "neither"
        raise InvalidStateError(f"block fits the gap in {which} orientation")
    return Decision.NO_ROTATE if now else Decision.ROTATE


@dataclass(frozen=True)
class TrialState:
    trial_index: int
    round: int
    block: BlockShape
    gap: GapLine
    fall_stage: FallStage
    requires_rotation: bool

    def to_dict(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "round": self.round,
            "block": self.block.to_dict(),
            "gap": self.gap.to_dict(),
            "fall_stage": self.fall_stage.value,
            "requires_rotation": self.requires_rotation,
        }

    @classmethod
    def from_dict(cls, d) -> "TrialState":
        return cls(
            trial_index=int(d["trial_index"]),
            round=int(d["round"]),
            block=BlockShape.from_dict(d["block"]),
            gap=GapLine.from_dict(d["gap"]),
            fall_stage=FallStage(d["fall_stage"]),
            requires_rotation=bool(d["requires_rotation"]),
        )


@dataclass(frozen=True)
class TrialSchedule:
    trials: tuple
    seed: int

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def __getitem__(self, i):
        return self.trials[i]


def make_trial(trial_index, shape_cells, orientation, requires_rotation, column) -> TrialState:
    """Build a round-1 state whose gap matches the requested ground truth."""
    block = BlockShape(tuple(shape_cells), orientation)
    target = block.rotated() if requires_rotation else block
    occupancy = [1] * LINE_WIDTH
    for i, cell in enumerate(target.bottom_row):
        if cell:
            occupancy[column + i] = 0
    state = TrialState(
        trial_index=trial_index,
        round=1,
        block=block,
        gap=GapLine(tuple(occupancy), column),
        fall_stage=FallStage.TOP,
        requires_rotation=bool(requires_rotation),
    )
    if (correct_action(state) is Decision.ROTATE) != state.requires_rotation:
        raise InvalidStateError("generated geometry disagrees with ground truth")
    return state


def generate_schedule(seed: int, n_trials: int = 16) -> TrialSchedule:
    """Sixteen (by default) trials, half needing rotation, balanced per half.

    Each half of the session is an independent shuffle of equal numbers of
    rotation and non-rotation trials.
    """
    if n_trials <= 0 or n_trials % 4:
        raise ConfigurationError(f"n_trials must be a positive multiple of 4, got {n_trials}")
    rng = np.random.default_rng(seed)
    quarter = n_trials // 4
    flags = []
    for _ in range(2):
        half = np.array([True] * quarter + [False] * quarter)
        rng.shuffle(half)
        flags.extend(bool(f) for f in half)

    trials = []
    for i, needs in enumerate(flags):
        cells = SHAPE_CATALOG[rng.integers(len(SHAPE_CATALOG))]
        orientation = int(rng.choice([0, 180]))
        column = int(rng.integers(1, LINE_WIDTH - len(cells[0])))
        trials.append(make_trial(i, cells, orientation, needs, column))
    return TrialSchedule(tuple(trials), seed)


def correct_action(state: TrialState) -> Decision:
    """Action that makes the block fit from its current orientation."""
    return action_for(state.block, state.gap)


def apply_decision(state: TrialState, d: Decision) -> TrialState:
    if state.fall_stage is FallStage.DROPPED:
        raise ProtocolError(f"trial {state.trial_index}: decision applied to a dropped block")
    block = state.block.rotated() if d is Decision.ROTATE else state.block
    stage = state.fall_stage.next()
    return replace(state, block=block, fall_stage=stage, round=2)


def score_trial(state: TrialState) -> int:
    if state.fall_stage is not FallStage.DROPPED:
        raise ProtocolError(f"trial {state.trial_index} has not been dropped yet")
    return int(fits(state.block, state.gap))


def score_session(final_states) -> int:
    return sum(score_trial(s) for s in final_states)


@dataclass(frozen=True)
class ViewModel:
    """What one participant's screen shows.  Receivers never get the gap."""

    role: Role
    trial_index: int
    round: int
    fall_stage: FallStage
    block: BlockShape
    gap: GapLine | None = None
    outcome: int | None = None

    def to_dict(self) -> dict:
        d = {
            "role": self.role.value,
            "trial_index": self.trial_index,
            "round": self.round,
            "fall_stage": self.fall_stage.value,
            "block": self.block.to_dict(),
        }
        if self.gap is not None:
            d["gap"] = self.gap.to_dict()
        if self.outcome is not None:
            d["outcome"] = self.outcome
        return d

    @classmethod
    def from_dict(cls, d) -> "ViewModel":
        return cls(
            role=Role(d["role"]),
            trial_index=int(d["trial_index"]),
            round=int(d["round"]),
            fall_stage=FallStage(d["fall_stage"]),
            block=BlockShape.from_dict(d["block"]),
            gap=GapLine.from_dict(d["gap"]) if "gap" in d else None,
            outcome=int(d["outcome"]) if "outcome" in d else None,
        )


def render_view(state: TrialState, role: Role) -> ViewModel:
    role = Role(role)
    outcome = score_trial(state) if state.fall_stage is FallStage.DROPPED else None
    return ViewModel(
        role=role,
        trial_index=state.trial_index,
        round=state.round,
        fall_stage=state.fall_stage,
        block=state.block,
        gap=state.gap if role is Role.SENDER else None,
        outcome=outcome,
    )
