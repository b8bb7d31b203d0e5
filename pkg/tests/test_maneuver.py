import pytest

from core.maneuver import (
    ManeuverError,
    SubAction,
    SubjectMode,
    TargetState,
    advance,
    mode_for,
    sequence,
    target_mode,
    targets,
)
from core.road import Lane

# Literal transcription, "W M S LC" shorthand
EXPECTED = {
    "LeftFree": {"LeftFree": "W", "LeftPlatoon": "M W", "RightFree": "W LC W", "RightPlatoon": "W LC M W"},
    "RightFree": {"LeftFree": "W LC W", "LeftPlatoon": "W LC M W", "RightFree": "W", "RightPlatoon": "M W"},
    "LeftPlatoonActive": {"LeftFree": "S W", "LeftPlatoon": "W", "RightFree": "S W LC W",
                          "RightPlatoon": "S W LC M W"},
    "RightPlatoonActive": {"LeftFree": "S W LC W", "LeftPlatoon": "S W LC M W", "RightFree": "S W",
                           "RightPlatoon": "W"},
    "LeftPlatoonPassive": {"LeftFree": "S W", "LeftPlatoon": "S W M W", "RightFree": "S W LC W",
                           "RightPlatoon": "S W LC M W"},
    "RightPlatoonPassive": {"LeftFree": "S W LC W", "LeftPlatoon": "S W LC M W", "RightFree": "S W",
                            "RightPlatoon": "S W M W"},
}
SHORTHAND = {"W": SubAction.WAIT, "M": SubAction.MERGE, "S": SubAction.SPLIT, "LC": SubAction.LANE_CHANGE}


@pytest.mark.parametrize("mode, target", [
    (mode, target) for mode, row in EXPECTED.items() for target in row
])
def test_sequence_table(mode, target):
    plan = sequence(SubjectMode(mode), TargetState(target))
    assert plan.sequence == tuple(SHORTHAND[token] for token in EXPECTED[mode][target].split())


def test_table_has_24_rows():
    assert sum(len(targets(mode)) for mode in SubjectMode) == 24


def test_every_sequence_ends_with_wait():
    for mode in SubjectMode:
        for target in targets(mode):
            assert sequence(mode, target).sequence[-1] is SubAction.WAIT


def test_mode_properties():
    assert SubjectMode.LEFT_PLATOON_PASSIVE.lane is Lane.LEFT
    assert SubjectMode.LEFT_PLATOON_PASSIVE.in_platoon
    assert SubjectMode.LEFT_PLATOON_PASSIVE.passive
    assert not SubjectMode.RIGHT_FREE.in_platoon
    assert mode_for(Lane.RIGHT, in_platoon=True) is SubjectMode.RIGHT_PLATOON_ACTIVE
    assert target_mode(TargetState.LEFT_PLATOON) is SubjectMode.LEFT_PLATOON_ACTIVE


@pytest.mark.parametrize("mode, completed, expected", [
    (SubjectMode.LEFT_FREE, SubAction.MERGE, SubjectMode.LEFT_PLATOON_ACTIVE),
    (SubjectMode.RIGHT_FREE, SubAction.LANE_CHANGE, SubjectMode.LEFT_FREE),
    (SubjectMode.RIGHT_PLATOON_ACTIVE, SubAction.SPLIT, SubjectMode.RIGHT_FREE),
    (SubjectMode.LEFT_PLATOON_PASSIVE, SubAction.SPLIT, SubjectMode.LEFT_FREE),
    (SubjectMode.LEFT_PLATOON_ACTIVE, SubAction.WAIT, SubjectMode.LEFT_PLATOON_ACTIVE),
])
def test_advance(mode, completed, expected):
    assert advance(mode, completed) is expected


def test_countdown_expiry_turns_platoon_passive():
    assert advance(SubjectMode.RIGHT_PLATOON_ACTIVE, None, countdown_expired=True) is SubjectMode.RIGHT_PLATOON_PASSIVE


@pytest.mark.parametrize("mode, completed", [
    (SubjectMode.LEFT_PLATOON_ACTIVE, SubAction.MERGE),
    (SubjectMode.RIGHT_FREE, SubAction.SPLIT),
    (SubjectMode.LEFT_PLATOON_PASSIVE, SubAction.LANE_CHANGE),
])
def test_illegal_transitions(mode, completed):
    with pytest.raises(ManeuverError):
        advance(mode, completed)


def test_countdown_expiry_requires_active_platoon():
    with pytest.raises(ManeuverError):
        advance(SubjectMode.LEFT_FREE, None, countdown_expired=True)
    assert issubclass(ManeuverError, ValueError)


def test_plan_helpers():
    plan = sequence(SubjectMode.RIGHT_FREE, TargetState.LEFT_PLATOON)
    assert len(plan) == 4
    assert plan.contains(SubAction.MERGE)
    assert plan.describe() == "wait->lane change->merge->wait"
