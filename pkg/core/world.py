"""
World Model
Vehicle states, per-lane ordering, event log and neighbor/prediction queries
"""

import bisect
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.road import Lane, RoadNetwork
from utils.rng import ScenarioRandom

logger = logging.getLogger(__name__)


class SimulationIntegrityError(RuntimeError):
    """Raised when the simulated world reaches a physically invalid state"""


class PlatoonRole(str, Enum):
    FREE = "free"
    LEADER = "leader"
    FOLLOWER = "follower"
    DISSOLVING = "dissolving"


@dataclass
class PlatoonMembership:
    """Platoon status of a vehicle; countdown is counted in road pieces"""
    role: PlatoonRole = PlatoonRole.FREE
    leader_id: Optional[int] = None
    split_countdown: int = 0
    joining: bool = False

    @property
    def is_member(self) -> bool:
        return self.role in (PlatoonRole.LEADER, PlatoonRole.FOLLOWER)

    @property
    def is_free(self) -> bool:
        return self.role is PlatoonRole.FREE

    def label(self) -> str:
        if self.role is PlatoonRole.FOLLOWER and self.joining:
            return "joining"
        return self.role.value


@dataclass
class VehicleState:
    """Kinematic and membership state of one simulated vehicle"""
    id: int
    lane: Lane
    x: float
    v: float
    a: float = 0.0
    length: float = 5.0
    lateral: float = 0.0
    platoon_enabled: bool = True
    membership: PlatoonMembership = field(default_factory=PlatoonMembership)
    last_lane_change_time: float = -math.inf
    marked_exit: bool = False
    is_subject: bool = False
    prev_x: Optional[float] = None
    lane_change_until: Optional[float] = None
    lane_change_speed: Optional[float] = None
    exit_decision_piece: Optional[int] = None

    @property
    def rear(self) -> float:
        return self.x - self.length

    @property
    def changing_lane(self) -> bool:
        return self.lane_change_until is not None


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    ids: Tuple[int, ...]
    position: float
    detail: str = ""

    def to_line(self) -> str:
        ids = ",".join(str(i) for i in self.ids)
        line = f"{self.time:.1f}\t{self.kind}\t{ids}\t{self.position:.3f}"
        return f"{line}\t{self.detail}" if self.detail else line


class EventLog:
    """Append-only record of entries, exits, merges, splits, lane changes and plans"""

    def __init__(self):
        self._events: List[Event] = []

    def append(self, time: float, kind: str, ids: Sequence[int], position: float, detail: str = ""):
        self._events.append(Event(round(time, 6), kind, tuple(int(i) for i in ids), float(position), detail))

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def of_kind(self, *kinds: str) -> List[Event]:
        return [e for e in self._events if e.kind in kinds]

    def to_lines(self) -> List[str]:
        return [e.to_line() for e in self._events]

    def write(self, path: Union[str, Path]):
        Path(path).write_text("\n".join(self.to_lines()) + ("\n" if self._events else ""))


@dataclass(frozen=True)
class PredictedVehicle:
    """Constant-velocity extrapolation of one neighbor"""
    id: int
    x0: float
    v: float
    length: float
    t0: float

    def position(self, t):
        return self.x0 + self.v * (np.asarray(t, dtype=float) - self.t0)

    def rear(self, t):
        return self.position(t) - self.length


@dataclass
class LeaderPrediction:
    """
    Predicted motion of the subject's current and prospective neighbors

    leaders holds the nearest vehicle ahead in each lane; followers holds the
    nearest vehicle behind in the lane the subject is not in.
    """
    t0: float
    horizon: float
    dt: float
    leaders: Dict[Lane, Optional[PredictedVehicle]]
    followers: Dict[Lane, Optional[PredictedVehicle]]

    @property
    def times(self) -> np.ndarray:
        count = int(round(self.horizon / self.dt))
        return self.t0 + self.dt * np.arange(count + 1)

    def samples(self, lane: Lane) -> Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """(times, positions, speeds) of the predicted leader in a lane"""
        leader = self.leaders.get(lane)
        if leader is None:
            return None
        times = self.times
        return times, leader.position(times), np.full_like(times, leader.v)


@dataclass
class WorldState:
    """
    Full simulation snapshot

    Vehicles are kept per lane in descending x. Every structural change goes
    through the methods below so the position index stays consistent.
    """
    network: RoadNetwork
    rng: ScenarioRandom
    tau_s: float = 0.4
    lane_width: float = 3.6
    step_count: int = 0
    subject_id: Optional[int] = None
    event_log: EventLog = field(default_factory=EventLog)
    lanes: Dict[Lane, List[VehicleState]] = field(default_factory=lambda: {Lane.LEFT: [], Lane.RIGHT: []})
    _by_id: Dict[int, VehicleState] = field(default_factory=dict, repr=False)
    _index: Dict[int, int] = field(default_factory=dict, repr=False)
    _keys: Dict[Lane, List[float]] = field(default_factory=dict, repr=False)
    _next_id: int = 1

    @property
    def clock(self) -> float:
        return self.step_count * self.tau_s

    # ---- structure -------------------------------------------------------

    def new_id(self) -> int:
        vehicle_id = self._next_id
        self._next_id += 1
        return vehicle_id

    def reindex(self):
        """Re-sort every lane by descending x and rebuild lookups"""
        for lane, vehicles in self.lanes.items():
            vehicles.sort(key=lambda veh: -veh.x)
            self._keys[lane] = [-veh.x for veh in vehicles]
            for position, veh in enumerate(vehicles):
                self._index[veh.id] = position

    def add_vehicle(self, vehicle: VehicleState) -> VehicleState:
        if vehicle.id in self._by_id:
            raise ValueError(f"Vehicle {vehicle.id} already exists")
        self._by_id[vehicle.id] = vehicle
        self.lanes[vehicle.lane].append(vehicle)
        if vehicle.is_subject:
            self.subject_id = vehicle.id
        self.reindex()
        return vehicle

    def add_vehicles(self, vehicles: Sequence[VehicleState]):
        """Bulk insert with a single reindex"""
        for vehicle in vehicles:
            if vehicle.id in self._by_id:
                raise ValueError(f"Vehicle {vehicle.id} already exists")
            self._by_id[vehicle.id] = vehicle
            self.lanes[vehicle.lane].append(vehicle)
            if vehicle.is_subject:
                self.subject_id = vehicle.id
        self.reindex()

    def remove_vehicle(self, vehicle_id: int) -> VehicleState:
        vehicle = self.vehicle(vehicle_id)
        self.lanes[vehicle.lane].remove(vehicle)
        del self._by_id[vehicle_id]
        self._index.pop(vehicle_id, None)
        self.reindex()
        return vehicle

    def move_to_lane(self, vehicle_id: int, lane: Lane):
        vehicle = self.vehicle(vehicle_id)
        if vehicle.lane is lane:
            return
        self.lanes[vehicle.lane].remove(vehicle)
        vehicle.lane = lane
        self.lanes[lane].append(vehicle)
        self.reindex()

    def vehicle(self, vehicle_id: int) -> VehicleState:
        try:
            return self._by_id[vehicle_id]
        except KeyError:
            raise ValueError(f"Unknown vehicle id {vehicle_id}")

    def get(self, vehicle_id: Optional[int]) -> Optional[VehicleState]:
        if vehicle_id is None:
            return None
        return self._by_id.get(vehicle_id)

    def __contains__(self, vehicle_id: int) -> bool:
        return vehicle_id in self._by_id

    def all_vehicles(self) -> List[VehicleState]:
        return self.lanes[Lane.LEFT] + self.lanes[Lane.RIGHT]

    def vehicle_count(self) -> int:
        return len(self._by_id)

    @property
    def subject(self) -> Optional[VehicleState]:
        return self.get(self.subject_id)

    # ---- neighbor queries ------------------------------------------------

    def leader_at(self, lane: Lane, x: float) -> Optional[VehicleState]:
        """Nearest vehicle with position strictly greater than x in a lane"""
        keys = self._keys.get(lane, [])
        position = bisect.bisect_left(keys, -x)
        return self.lanes[lane][position - 1] if position > 0 else None

    def follower_at(self, lane: Lane, x: float) -> Optional[VehicleState]:
        """Nearest vehicle with position strictly smaller than x in a lane"""
        keys = self._keys.get(lane, [])
        position = bisect.bisect_right(keys, -x)
        vehicles = self.lanes[lane]
        return vehicles[position] if position < len(vehicles) else None

    def leader_of(self, vehicle_id: int, lane: Optional[Lane] = None) -> Optional[VehicleState]:
        """
        Nearest vehicle ahead of a vehicle

        Args:
            vehicle_id: Querying vehicle
            lane: Lane to search; defaults to the vehicle's own lane

        Returns:
            The leader, or None
        """
        vehicle = self.vehicle(vehicle_id)
        lane = lane or vehicle.lane
        if lane is vehicle.lane:
            position = self._index[vehicle_id]
            return self.lanes[lane][position - 1] if position > 0 else None
        return self.leader_at(lane, vehicle.x)

    def follower_of(self, vehicle_id: int, lane: Optional[Lane] = None) -> Optional[VehicleState]:
        vehicle = self.vehicle(vehicle_id)
        lane = lane or vehicle.lane
        if lane is vehicle.lane:
            position = self._index[vehicle_id]
            vehicles = self.lanes[lane]
            return vehicles[position + 1] if position + 1 < len(vehicles) else None
        return self.follower_at(lane, vehicle.x)

    @staticmethod
    def gap(follower: VehicleState, leader: VehicleState) -> float:
        """Bumper-to-bumper gap"""
        return leader.x - leader.length - follower.x

    def upstream_sample(self, n_per_lane: int, vehicle_id: Optional[int] = None) -> List[VehicleState]:
        """
        The n_per_lane nearest vehicles behind the subject in each lane

        Args:
            n_per_lane: Vehicles to take per lane
            vehicle_id: Reference vehicle; defaults to the subject

        Returns:
            Left-lane sample followed by right-lane sample, nearest first
        """
        if n_per_lane < 1:
            raise ValueError(f"n_per_lane must be at least 1, got {n_per_lane}")
        reference = self.vehicle(vehicle_id if vehicle_id is not None else self.subject_id)
        sample: List[VehicleState] = []
        for lane in (Lane.LEFT, Lane.RIGHT):
            keys = self._keys.get(lane, [])
            position = bisect.bisect_right(keys, -reference.x)
            behind = [veh for veh in self.lanes[lane][position:] if veh.id != reference.id]
            sample.extend(behind[:n_per_lane])
        return sample

    def downstream_sample(self, n_per_lane: int, vehicle_id: Optional[int] = None) -> List[VehicleState]:
        """The n_per_lane nearest vehicles ahead of the subject in each lane"""
        if n_per_lane < 1:
            raise ValueError(f"n_per_lane must be at least 1, got {n_per_lane}")
        reference = self.vehicle(vehicle_id if vehicle_id is not None else self.subject_id)
        sample: List[VehicleState] = []
        for lane in (Lane.LEFT, Lane.RIGHT):
            keys = self._keys.get(lane, [])
            position = bisect.bisect_left(keys, -reference.x)
            ahead = [veh for veh in self.lanes[lane][:position] if veh.id != reference.id]
            sample.extend(list(reversed(ahead))[:n_per_lane])
        return sample

    def platoon_members(self, leader_id: int) -> List[VehicleState]:
        """Leader followed by its followers, front to back"""
        leader = self.vehicle(leader_id)
        members = [leader]
        vehicles = self.lanes[leader.lane]
        for veh in vehicles[self._index[leader_id] + 1:]:
            if veh.membership.role is PlatoonRole.FOLLOWER and veh.membership.leader_id == leader_id:
                members.append(veh)
            elif veh.membership.role is PlatoonRole.DISSOLVING:
                continue
            else:
                break
        return members

    # ---- bookkeeping -----------------------------------------------------

    def log(self, kind: str, ids: Sequence[int], position: float, detail: str = ""):
        self.event_log.append(self.clock, kind, ids, position, detail)

    def check_integrity(self):
        """Raise SimulationIntegrityError on overlap, NaN or negative speed"""
        for lane, vehicles in self.lanes.items():
            for position, veh in enumerate(vehicles):
                if not (math.isfinite(veh.x) and math.isfinite(veh.v) and math.isfinite(veh.a)):
                    raise SimulationIntegrityError(f"Vehicle {veh.id} has a non-finite state at t={self.clock:.1f}")
                if veh.v < -1e-9:
                    raise SimulationIntegrityError(f"Vehicle {veh.id} has negative speed {veh.v} at t={self.clock:.1f}")
                if position > 0:
                    leader = vehicles[position - 1]
                    if self.gap(veh, leader) <= 0:
                        raise SimulationIntegrityError(
                            f"Overlap in {lane.value} lane between {leader.id} and {veh.id} "
                            f"at x={veh.x:.2f}, t={self.clock:.1f}"
                        )

    def snapshot_lines(self) -> List[str]:
        """Line-oriented dump of every vehicle, same layout family as the event log"""
        lines = []
        for lane in (Lane.LEFT, Lane.RIGHT):
            for veh in self.lanes[lane]:
                lines.append(
                    f"{self.clock:.1f}\tstate\t{veh.id}\t{veh.x:.3f}\t"
                    f"lane={lane.value} v={veh.v:.3f} platoon={veh.membership.label()}"
                )
        return lines


def predict_leaders(
    world: WorldState,
    horizon: float,
    dt: float = 0.1,
    t_upd: float = 0.4,
    vehicle_id: Optional[int] = None,
) -> LeaderPrediction:
    """
    Constant-velocity prediction of the subject's neighbors

    Args:
        world: Current world
        horizon: Prediction length in seconds (at least 2 * t_upd)
        dt: Sample spacing
        t_upd: Planner update period
        vehicle_id: Reference vehicle; defaults to the subject

    Returns:
        LeaderPrediction starting at the world clock
    """
    if horizon < 2.0 * t_upd - 1e-9:
        raise ValueError(f"Prediction horizon {horizon} is shorter than 2 * t_upd = {2.0 * t_upd}")
    reference = world.vehicle(vehicle_id if vehicle_id is not None else world.subject_id)
    t0 = world.clock

    def extrapolate(veh: Optional[VehicleState]) -> Optional[PredictedVehicle]:
        if veh is None:
            return None
        return PredictedVehicle(id=veh.id, x0=veh.x, v=veh.v, length=veh.length, t0=t0)

    leaders = {lane: extrapolate(world.leader_of(reference.id, lane)) for lane in (Lane.LEFT, Lane.RIGHT)}
    other = reference.lane.other
    followers = {
        reference.lane: None,
        other: extrapolate(world.follower_of(reference.id, other)),
    }
    return LeaderPrediction(t0=t0, horizon=horizon, dt=dt, leaders=leaders, followers=followers)
