"""
Shared fixtures: short networks, empty worlds and a vehicle factory
"""

import pytest

from core.road import Lane, build_reference_network, make_network
from core.world import PlatoonMembership, PlatoonRole, VehicleState, WorldState
from utils.rng import ScenarioRandom


@pytest.fixture
def reference_network():
    return build_reference_network()


@pytest.fixture
def short_network():
    """Three pieces (300, 300, 200 m); on-ramp on piece 1, off-ramp on piece 3"""
    return make_network([300.0, 300.0, 200.0], onramps=(1,), offramps=(3,))


@pytest.fixture
def plain_network():
    """Two ramp-free pieces"""
    return make_network([600.0, 600.0])


@pytest.fixture
def make_world():
    def _make(network, seed: int = 7, tau_s: float = 0.4) -> WorldState:
        return WorldState(network=network, rng=ScenarioRandom(seed), tau_s=tau_s)
    return _make


@pytest.fixture
def add_vehicle():
    """Insert a vehicle; keyword arguments are passed to VehicleState"""
    def _add(world: WorldState, lane: Lane, x: float, v: float = 10.0, **fields) -> VehicleState:
        return world.add_vehicle(VehicleState(id=world.new_id(), lane=lane, x=x, v=v, **fields))
    return _add


@pytest.fixture
def make_platoon(add_vehicle):
    """Leader at the front, followers behind it at the given positions"""
    def _make(world: WorldState, lane: Lane, positions, v: float = 10.0, countdown: int = 5):
        leader = add_vehicle(world, lane, positions[0], v,
                             membership=PlatoonMembership(role=PlatoonRole.LEADER, split_countdown=countdown))
        followers = [
            add_vehicle(world, lane, x, v, membership=PlatoonMembership(
                role=PlatoonRole.FOLLOWER, leader_id=leader.id, split_countdown=countdown))
            for x in positions[1:]
        ]
        return leader, followers
    return _make
