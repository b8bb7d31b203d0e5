import numpy as np
import pytest

from core.road import Lane
from core.world import (
    EventLog,
    PredictedVehicle,
    SimulationIntegrityError,
    predict_leaders,
)
from utils.rng import ScenarioRandom


@pytest.fixture
def world(make_world, plain_network, add_vehicle):
    """Right lane 300/250/200, left lane 280/150; subject at 250 right"""
    w = make_world(plain_network)
    for x in (300.0, 200.0):
        add_vehicle(w, Lane.RIGHT, x)
    add_vehicle(w, Lane.RIGHT, 250.0, 12.0, is_subject=True)
    add_vehicle(w, Lane.LEFT, 280.0, 15.0)
    add_vehicle(w, Lane.LEFT, 150.0, 9.0)
    return w


def test_lanes_are_sorted_descending(world):
    assert [veh.x for veh in world.lanes[Lane.RIGHT]] == [300.0, 250.0, 200.0]
    assert world.subject.x == 250.0
    assert world.vehicle_count() == 5


def test_leader_and_follower_queries(world):
    subject = world.subject
    assert world.leader_of(subject.id).x == 300.0
    assert world.follower_of(subject.id).x == 200.0
    assert world.leader_of(subject.id, Lane.LEFT).x == 280.0
    assert world.follower_of(subject.id, Lane.LEFT).x == 150.0
    assert world.leader_at(Lane.RIGHT, 300.0) is None
    assert world.follower_at(Lane.LEFT, 150.0) is None


def test_unknown_vehicle(world):
    with pytest.raises(ValueError, match="Unknown vehicle"):
        world.leader_of(999)
    assert world.get(999) is None
    assert world.get(None) is None


def test_duplicate_id_rejected(world):
    with pytest.raises(ValueError, match="already exists"):
        world.add_vehicle(world.subject)


def test_gap_is_bumper_to_bumper(world):
    subject = world.subject
    assert world.gap(subject, world.leader_of(subject.id)) == pytest.approx(45.0)


def test_move_and_remove_keep_index(world):
    subject = world.subject
    world.move_to_lane(subject.id, Lane.LEFT)
    assert world.leader_of(subject.id).x == 280.0
    assert world.follower_of(subject.id, Lane.RIGHT).x == 200.0
    world.remove_vehicle(world.leader_of(subject.id).id)
    assert world.leader_of(subject.id) is None


def test_upstream_and_downstream_samples(world):
    upstream = world.upstream_sample(1)
    assert [veh.x for veh in upstream] == [150.0, 200.0]
    assert [veh.x for veh in world.upstream_sample(5)] == [150.0, 200.0]
    assert [veh.x for veh in world.downstream_sample(1)] == [280.0, 300.0]
    with pytest.raises(ValueError):
        world.upstream_sample(0)


def test_upstream_sample_of_last_vehicle_is_empty(make_world, plain_network, add_vehicle):
    w = make_world(plain_network)
    add_vehicle(w, Lane.RIGHT, 100.0, is_subject=True)
    assert w.upstream_sample(3) == []


def test_platoon_members(make_world, plain_network, make_platoon, add_vehicle):
    w = make_world(plain_network)
    leader, followers = make_platoon(w, Lane.RIGHT, [400.0, 385.0, 370.0])
    add_vehicle(w, Lane.RIGHT, 300.0)
    assert [veh.id for veh in w.platoon_members(leader.id)] == [leader.id] + [f.id for f in followers]


def test_predict_leaders_constant_velocity(world):
    world.step_count = 10
    prediction = predict_leaders(world, horizon=4.0, dt=0.1, t_upd=0.4)
    leader = prediction.leaders[Lane.RIGHT]
    assert leader.x0 == 300.0
    assert prediction.t0 == pytest.approx(4.0)
    assert leader.position(prediction.t0) == pytest.approx(300.0)
    assert leader.position(prediction.t0 + 0.8) == pytest.approx(308.0)
    assert prediction.followers[Lane.RIGHT] is None
    assert prediction.followers[Lane.LEFT].x0 == 150.0
    times, positions, speeds = prediction.samples(Lane.LEFT)
    assert len(times) == 41
    np.testing.assert_allclose(positions, 280.0 + 15.0 * (times - 4.0))
    assert np.all(speeds == 15.0)


def test_prediction_horizon_must_cover_two_updates(world):
    with pytest.raises(ValueError, match="shorter"):
        predict_leaders(world, horizon=0.5, t_upd=0.4)


def test_predicted_rear():
    veh = PredictedVehicle(id=1, x0=100.0, v=10.0, length=5.0, t0=0.0)
    assert veh.rear(0.8) == pytest.approx(103.0)


def test_integrity_detects_overlap(make_world, plain_network, add_vehicle):
    w = make_world(plain_network)
    add_vehicle(w, Lane.RIGHT, 100.0)
    add_vehicle(w, Lane.RIGHT, 96.0)
    with pytest.raises(SimulationIntegrityError, match="Overlap"):
        w.check_integrity()


def test_integrity_detects_negative_speed(make_world, plain_network, add_vehicle):
    w = make_world(plain_network)
    add_vehicle(w, Lane.LEFT, 100.0, -1.0)
    with pytest.raises(SimulationIntegrityError, match="negative speed"):
        w.check_integrity()


def test_event_line_format(tmp_path):
    log = EventLog()
    log.append(12.4, "merge", [7, 3], 400.0)
    log.append(12.8, "plan", [1], 512.25, "target=LeftFree")
    assert log.to_lines() == ["12.4\tmerge\t7,3\t400.000", "12.8\tplan\t1\t512.250\ttarget=LeftFree"]
    assert len(log.of_kind("plan")) == 1
    path = tmp_path / "events.log"
    log.write(path)
    assert path.read_text().splitlines() == log.to_lines()


def test_world_log_uses_clock(world):
    world.step_count = 3
    world.log("enter", [world.subject_id], 250.0)
    assert world.event_log.to_lines()[-1].startswith("1.2\tenter\t")


def test_random_streams_are_independent():
    a, b = ScenarioRandom(11), ScenarioRandom(11)
    a.random("spawn")
    a.random("spawn")
    assert a.random("merge") == b.random("merge")
    assert a.random("spawn") != ScenarioRandom(12).random("spawn")
    with pytest.raises(ValueError):
        ScenarioRandom(-1)
