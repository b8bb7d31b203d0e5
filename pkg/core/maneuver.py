"""
Maneuver Planner
Subject states, sub-actions and the sub-action sequence table
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from core.road import Lane


class ManeuverError(ValueError):
    """Illegal (mode, sub-action) combination"""


class SubAction(str, Enum):
    WAIT = "wait"
    MERGE = "merge"
    SPLIT = "split"
    LANE_CHANGE = "lane change"


class SubjectMode(str, Enum):
    LEFT_FREE = "LeftFree"
    RIGHT_FREE = "RightFree"
    LEFT_PLATOON_ACTIVE = "LeftPlatoonActive"
    RIGHT_PLATOON_ACTIVE = "RightPlatoonActive"
    LEFT_PLATOON_PASSIVE = "LeftPlatoonPassive"
    RIGHT_PLATOON_PASSIVE = "RightPlatoonPassive"

    @property
    def lane(self) -> Lane:
        return Lane.LEFT if self.value.startswith("Left") else Lane.RIGHT

    @property
    def in_platoon(self) -> bool:
        return "Platoon" in self.value

    @property
    def passive(self) -> bool:
        return self.value.endswith("Passive")


class TargetState(str, Enum):
    LEFT_FREE = "LeftFree"
    LEFT_PLATOON = "LeftPlatoon"
    RIGHT_FREE = "RightFree"
    RIGHT_PLATOON = "RightPlatoon"

    @property
    def lane(self) -> Lane:
        return Lane.LEFT if self.value.startswith("Left") else Lane.RIGHT

    @property
    def in_platoon(self) -> bool:
        return self.value.endswith("Platoon")


def mode_for(lane: Lane, in_platoon: bool = False, passive: bool = False) -> SubjectMode:
    """Mode for a lane and membership status"""
    side = "Left" if lane is Lane.LEFT else "Right"
    if not in_platoon:
        return SubjectMode(f"{side}Free")
    return SubjectMode(f"{side}Platoon{'Passive' if passive else 'Active'}")


def target_mode(target: TargetState) -> SubjectMode:
    """Mode reached once a target's sequence has been carried out"""
    return mode_for(target.lane, in_platoon=target.in_platoon)


W = SubAction.WAIT
M = SubAction.MERGE
S = SubAction.SPLIT
LC = SubAction.LANE_CHANGE

LF = TargetState.LEFT_FREE
LP = TargetState.LEFT_PLATOON
RF = TargetState.RIGHT_FREE
RP = TargetState.RIGHT_PLATOON

# Normative table, one row per (state, target); kept as data on purpose.
SEQUENCES: Dict[SubjectMode, Dict[TargetState, Tuple[SubAction, ...]]] = {
    SubjectMode.LEFT_FREE: {
        LF: (W,),
        LP: (M, W),
        RF: (W, LC, W),
        RP: (W, LC, M, W),
    },
    SubjectMode.RIGHT_FREE: {
        LF: (W, LC, W),
        LP: (W, LC, M, W),
        RF: (W,),
        RP: (M, W),
    },
    SubjectMode.LEFT_PLATOON_ACTIVE: {
        LF: (S, W),
        LP: (W,),
        RF: (S, W, LC, W),
        RP: (S, W, LC, M, W),
    },
    SubjectMode.RIGHT_PLATOON_ACTIVE: {
        LF: (S, W, LC, W),
        LP: (S, W, LC, M, W),
        RF: (S, W),
        RP: (W,),
    },
    SubjectMode.LEFT_PLATOON_PASSIVE: {
        LF: (S, W),
        LP: (S, W, M, W),
        RF: (S, W, LC, W),
        RP: (S, W, LC, M, W),
    },
    SubjectMode.RIGHT_PLATOON_PASSIVE: {
        LF: (S, W, LC, W),
        LP: (S, W, LC, M, W),
        RF: (S, W),
        RP: (S, W, M, W),
    },
}


@dataclass(frozen=True)
class ManeuverPlan:
    """Target state plus the ordered sub-actions that reach it"""
    mode: SubjectMode
    target: TargetState
    sequence: Tuple[SubAction, ...]

    def __len__(self) -> int:
        return len(self.sequence)

    def contains(self, sub_action: SubAction) -> bool:
        return sub_action in self.sequence

    def describe(self) -> str:
        return "->".join(step.value for step in self.sequence)


def targets(mode: SubjectMode) -> List[TargetState]:
    """All four targets; identical for every mode"""
    return list(SEQUENCES[mode].keys())


def sequence(mode: SubjectMode, target: TargetState) -> ManeuverPlan:
    """Sub-action sequence taking a mode to a target"""
    return ManeuverPlan(mode=mode, target=target, sequence=SEQUENCES[mode][target])


def advance(
    mode: SubjectMode,
    completed: Optional[SubAction],
    countdown_expired: bool = False,
) -> SubjectMode:
    """
    Mode after a completed sub-action

    Args:
        mode: Mode before the sub-action
        completed: The sub-action that just finished (None for a pure countdown event)
        countdown_expired: The platoon's scheduled splitting position was reached

    Returns:
        The resulting mode

    Raises:
        ManeuverError: for sub-actions that are not legal in the mode
    """
    if countdown_expired:
        if not mode.in_platoon or mode.passive or completed not in (None, SubAction.WAIT):
            raise ManeuverError(f"Countdown expiry is only meaningful for an active platoon, not {mode.value}")
        return mode_for(mode.lane, in_platoon=True, passive=True)
    if completed is None or completed is SubAction.WAIT:
        return mode
    if completed is SubAction.MERGE:
        if mode.in_platoon:
            raise ManeuverError(f"Cannot merge while already in a platoon ({mode.value})")
        return mode_for(mode.lane, in_platoon=True)
    if completed is SubAction.SPLIT:
        if not mode.in_platoon:
            raise ManeuverError(f"Cannot split as a free agent ({mode.value})")
        return mode_for(mode.lane)
    if completed is SubAction.LANE_CHANGE:
        if mode.in_platoon:
            raise ManeuverError(f"Platoon members cannot change lane ({mode.value})")
        return mode_for(mode.lane.other)
    raise ManeuverError(f"Unknown sub-action {completed}")
