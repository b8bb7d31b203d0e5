"""
Traffic Simulator
Surrounding-vehicle behavior: ramps, platoon merge/split, random lane changes, IDM
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from core.idm import IdmParams, idm_accel_array
from core.road import Lane, RoadNetwork
from core.world import (
    PlatoonMembership,
    PlatoonRole,
    SimulationIntegrityError,
    VehicleState,
    WorldState,
)
from utils.rng import ScenarioRandom

logger = logging.getLogger(__name__)


class TrafficStateKind(str, Enum):
    """Traffic state of a scenario, defined by its density band"""
    FREE_FLOW = "free"
    ONSET = "onset"
    CONGESTED = "congested"

    @property
    def density_band(self) -> Tuple[float, float]:
        """(lower, upper) density as a multiple of the capacity density k_m"""
        return {
            TrafficStateKind.FREE_FLOW: (0.2, 0.3),
            TrafficStateKind.ONSET: (0.3, 0.8),
            TrafficStateKind.CONGESTED: (0.8, 2.0),
        }[self]


@dataclass(frozen=True)
class BehaviorParams:
    """Per-epoch probabilities and timing of surrounding-vehicle behavior"""
    p_on: float = 0.6
    p_off: float = 0.6
    p_npe: float = 0.5
    p_merge: float = 0.6
    p_change: float = 0.1
    t_p: float = 3.5
    t_g: float = 0.55
    t_lc: float = 5.0
    t_lcp: float = 3.6
    d_cg: float = 50.0
    tau_s: float = 0.4
    comm_range: float = 300.0
    schedule_mean_left: float = 2.0
    schedule_mean_right: float = -1.0
    schedule_sigma: float = 5.0
    schedule_levels: Tuple[int, ...] = (2, 10, 50)
    vehicle_length: float = 5.0
    lane_width: float = 3.6
    warmup_time: float = 120.0
    warmup_sigma: float = 2.0
    insertion_wait: float = 60.0
    approach_length: float = 4000.0
    join_margin: float = 1.0
    safety_gap: float = 0.5
    idm: IdmParams = field(default_factory=IdmParams)

    def __post_init__(self):
        for name in ("p_on", "p_off", "p_npe", "p_merge", "p_change"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"Probability {name} must be in [0, 1], got {value}")
        for name in ("t_p", "t_g", "t_lc", "t_lcp", "d_cg", "tau_s", "comm_range", "vehicle_length", "lane_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        levels = list(self.schedule_levels)
        if not levels or levels != sorted(set(levels)):
            raise ValueError(f"Schedule levels must be strictly ascending, got {self.schedule_levels}")
        if self.approach_length < 0 or self.warmup_time < 0 or self.insertion_wait < 0:
            raise ValueError("Warm-up durations and approach length must be non-negative")

    def schedule_mean(self, lane: Lane) -> float:
        return self.schedule_mean_left if lane is Lane.LEFT else self.schedule_mean_right


@dataclass
class SubjectMotion:
    """Subject kinematics at the end of a step; y is the absolute lateral coordinate"""
    x: float
    v: float
    a: float
    y: float


SubjectUpdate = Callable[[WorldState, float], SubjectMotion]


@dataclass
class StepReport:
    spawned: List[int] = field(default_factory=list)
    exited: List[int] = field(default_factory=list)
    ended: List[int] = field(default_factory=list)
    lane_changes: List[int] = field(default_factory=list)
    clamped: List[int] = field(default_factory=list)
    subject_clamped: bool = False


def capacity_density(t_p: float, v_m: float) -> float:
    """Density at which the flow reaches its maximum 1/t_p"""
    return 1.0 / (t_p * v_m)


def jam_density(vehicle_length: float, s0: float) -> float:
    """Density of a standing queue"""
    return 1.0 / (vehicle_length + s0)


def greenberg_speed(k: float, v_m: float, k_j: float, v_max: Optional[float] = None) -> float:
    """
    Greenberg speed-density relationship

    Args:
        k: Density in vehicles per meter, 0 < k <= k_j
        v_m: Speed at capacity
        k_j: Jam density
        v_max: Optional lane speed cap

    Returns:
        Speed in m/s, clamped to [0, v_max]
    """
    if not 0.0 < k <= k_j:
        raise ValueError(f"Density {k} is outside (0, {k_j}]")
    speed = max(0.0, v_m * math.log(k_j / k))
    return min(speed, v_max) if v_max is not None else speed


def map_schedule_level(p: float, levels: Tuple[int, ...]) -> int:
    """Smallest level not below p, or the top level when p exceeds all of them"""
    for level in levels:
        if p <= level:
            return level
    return levels[-1]


def schedule_split(lane: Lane, bp: BehaviorParams, rng: ScenarioRandom) -> int:
    """Scheduled splitting distance, in road pieces, for a newly formed platoon"""
    draw = rng.normal("schedule", bp.schedule_mean(lane), bp.schedule_sigma)
    return map_schedule_level(draw, bp.schedule_levels)


class TrafficSimulator:
    """
    Advances the world by one update epoch

    Surrounding vehicles run, in order: ramp entry and exit, platoon merge and
    split at piece transitions, random lane changing, then IDM speed
    adjustment. Accelerations are computed from the state at the start of the
    epoch and held over it. The subject follows the motion supplied by its
    controller, or plain IDM when none is given.
    """

    def __init__(self, bp: Optional[BehaviorParams] = None):
        self.bp = bp or BehaviorParams()
        self.inflow_profile: Dict[Lane, Tuple[float, float]] = {}

    # ---- entry and exit ---------------------------------------------------

    def _has_room(self, gap: float, v: float) -> bool:
        return gap > 0.0 and gap >= max(self.bp.t_p * v, self.bp.idm.s0)

    def try_spawn_onramp(self, world: WorldState) -> List[VehicleState]:
        """
        Insert on-ramp vehicles into the right lane

        Each on-ramp draws once per epoch. A vehicle enters when it keeps a time
        gap of t_p to both the downstream and upstream vehicles and would not
        land inside a platoon.

        Args:
            world: Current world

        Returns:
            Newly inserted vehicles
        """
        bp = self.bp
        spawned = []
        for ramp_x in world.network.onramp_points():
            if world.rng.random("spawn") >= bp.p_on:
                continue
            enabled = world.rng.random("spawn") >= bp.p_npe
            downstream = world.leader_at(Lane.RIGHT, ramp_x)
            upstream = world.follower_at(Lane.RIGHT, ramp_x)
            speed = downstream.v if downstream is not None else world.network.v_m(Lane.RIGHT)
            if downstream is not None and not self._has_room(downstream.rear - ramp_x, speed):
                continue
            if upstream is not None:
                if upstream.membership.role is PlatoonRole.FOLLOWER:
                    continue
                if not self._has_room(ramp_x - bp.vehicle_length - upstream.x, upstream.v):
                    continue
            if any(veh.x == ramp_x for veh in world.lanes[Lane.RIGHT]):
                continue
            vehicle = world.add_vehicle(VehicleState(
                id=world.new_id(), lane=Lane.RIGHT, x=ramp_x, v=speed,
                length=bp.vehicle_length, platoon_enabled=enabled,
            ))
            world.log("enter", [vehicle.id], ramp_x, "onramp")
            spawned.append(vehicle)
        return spawned

    def inflow(self, world: WorldState) -> List[VehicleState]:
        """Upstream boundary inflow at the approach entry, one vehicle per lane at most"""
        bp = self.bp
        entry = -bp.approach_length
        spawned = []
        for lane, (spacing, speed) in sorted(self.inflow_profile.items(), key=lambda item: item[0].value):
            vehicles = world.lanes[lane]
            last = vehicles[-1] if vehicles else None
            if last is not None:
                gap = last.rear - entry
                speed = last.v
                if gap < max(spacing - bp.vehicle_length, bp.idm.s0 + bp.t_p * speed):
                    continue
            enabled = world.rng.random("inflow") >= bp.p_npe
            vehicle = world.add_vehicle(VehicleState(
                id=world.new_id(), lane=lane, x=entry, v=speed,
                length=bp.vehicle_length, platoon_enabled=enabled,
            ))
            world.log("enter", [vehicle.id], entry, "inflow")
            spawned.append(vehicle)
        return spawned

    def try_exit_offramp(self, world: WorldState) -> List[int]:
        """
        Remove marked vehicles at off-ramps

        A vehicle decides once per off-ramp, when it enters the ramp's piece.
        Marked free agents in the right lane leave once the time gap to the
        ramp point drops below tau_s.

        Args:
            world: Current world

        Returns:
            Ids of removed vehicles
        """
        bp = self.bp
        network = world.network
        removed = []
        for vehicle in list(world.all_vehicles()):
            if vehicle.is_subject or not 0.0 <= vehicle.x < network.total_length:
                continue
            piece = network.piece(network.piece_at(vehicle.x))
            if piece.has_offramp and vehicle.exit_decision_piece != piece.index:
                vehicle.exit_decision_piece = piece.index
                vehicle.marked_exit = world.rng.random("exit") < bp.p_off
            if not vehicle.marked_exit:
                continue
            if vehicle.exit_decision_piece != piece.index or vehicle.x > piece.midpoint:
                vehicle.marked_exit = False
                continue
            if vehicle.lane is not Lane.RIGHT or not vehicle.membership.is_free or vehicle.changing_lane:
                continue
            distance = piece.midpoint - vehicle.x
            if distance < bp.tau_s * vehicle.v:
                world.remove_vehicle(vehicle.id)
                world.log("exit", [vehicle.id], vehicle.x, f"piece={piece.index}")
                removed.append(vehicle.id)
        return removed

    def remove_finished(self, world: WorldState) -> List[int]:
        """Drop vehicles past the end of the network, handing platoon leadership on"""
        end = world.network.total_length
        removed = []
        for vehicle in list(world.all_vehicles()):
            if vehicle.is_subject or vehicle.x < end:
                continue
            if vehicle.membership.role is PlatoonRole.LEADER:
                self._hand_over_leadership(world, vehicle)
            world.remove_vehicle(vehicle.id)
            world.log("end", [vehicle.id], vehicle.x)
            removed.append(vehicle.id)
        return removed

    def _hand_over_leadership(self, world: WorldState, leader: VehicleState):
        members = world.platoon_members(leader.id)[1:]
        dependents = [veh for veh in world.all_vehicles() if veh.membership.leader_id == leader.id]
        if not members:
            for veh in dependents:
                veh.membership.leader_id = None
            return
        successor = members[0]
        if len(members) == 1:
            successor.membership = PlatoonMembership()
        else:
            successor.membership = PlatoonMembership(
                role=PlatoonRole.LEADER, split_countdown=leader.membership.split_countdown,
            )
        for veh in dependents:
            if veh.id != successor.id:
                veh.membership.leader_id = successor.id
        world.log("leader", [successor.id, leader.id], successor.x)

    # ---- platoons ---------------------------------------------------------

    def _can_be_merged_into(self, world: WorldState, target: Optional[VehicleState]) -> bool:
        if target is None or target.is_subject or not target.platoon_enabled or target.changing_lane:
            return False
        membership = target.membership
        if membership.role is PlatoonRole.DISSOLVING or membership.joining:
            return False
        if membership.role is PlatoonRole.FREE:
            return True
        leader = world.get(target.id if membership.role is PlatoonRole.LEADER else membership.leader_id)
        if leader is None or leader.membership.split_countdown <= 0:
            return False
        return world.platoon_members(leader.id)[-1].id == target.id

    def merge_split_at_transitions(self, world: WorldState) -> Tuple[List[int], List[int]]:
        """
        Platoon bookkeeping for entities that crossed a piece transition

        Crossing platoons count down their splitting schedule; crossing free
        agents and platoon leaders may merge with the downstream entity. Expired
        platoons dissolve tail-first, one follower at a time.

        Args:
            world: Current world

        Returns:
            (ids that merged, ids that started a split)
        """
        bp = self.bp
        network = world.network
        crossed: List[Tuple[VehicleState, float]] = []
        for vehicle in world.all_vehicles():
            if vehicle.prev_x is None:
                continue
            point = network.crossed_transition(vehicle.prev_x, vehicle.x)
            if point is not None:
                crossed.append((vehicle, point))
        crossed.sort(key=lambda item: -item[0].x)

        splits: List[int] = []
        for vehicle, point in crossed:
            if vehicle.membership.role is not PlatoonRole.LEADER:
                continue
            members = world.platoon_members(vehicle.id)
            countdown = vehicle.membership.split_countdown - 1
            for member in members:
                member.membership.split_countdown = countdown
            if countdown <= 0 and len(members) > 1:
                followers = [m.id for m in reversed(members[1:])]
                world.log("split", [vehicle.id] + followers, point, f"members={len(members)}")
                splits.extend(followers)

        merged: List[int] = []
        for vehicle, point in crossed:
            if vehicle.is_subject or not vehicle.platoon_enabled or vehicle.changing_lane:
                continue
            membership = vehicle.membership
            if membership.role is PlatoonRole.LEADER and membership.split_countdown <= 0:
                continue
            if membership.role not in (PlatoonRole.FREE, PlatoonRole.LEADER):
                continue
            target = world.leader_of(vehicle.id)
            if not self._can_be_merged_into(world, target):
                continue
            if world.gap(vehicle, target) > bp.comm_range:
                continue
            if world.rng.random("merge") >= bp.p_merge:
                continue
            if target.membership.role is PlatoonRole.FREE:
                target.membership = PlatoonMembership(
                    role=PlatoonRole.LEADER,
                    split_countdown=schedule_split(target.lane, bp, world.rng),
                )
                leader = target
            else:
                leader = world.vehicle(
                    target.id if target.membership.role is PlatoonRole.LEADER else target.membership.leader_id
                )
            countdown = leader.membership.split_countdown
            joining = [vehicle]
            if membership.role is PlatoonRole.LEADER:
                joining += world.platoon_members(vehicle.id)[1:]
            for member in joining:
                member.membership = PlatoonMembership(
                    role=PlatoonRole.FOLLOWER,
                    leader_id=leader.id,
                    split_countdown=countdown,
                    joining=member.id == vehicle.id,
                )
            for veh in world.all_vehicles():
                if veh.membership.role is PlatoonRole.DISSOLVING and veh.membership.leader_id == vehicle.id:
                    veh.membership.leader_id = leader.id
            world.log("merge", [vehicle.id, leader.id], point, f"countdown={countdown}")
            merged.append(vehicle.id)

        self._advance_dissolution(world)
        self._update_membership_progress(world)
        return merged, splits

    @staticmethod
    def _dependents(world: WorldState) -> Dict[int, List[VehicleState]]:
        """Followers and detaching vehicles grouped by the platoon leader they point at"""
        grouped: Dict[int, List[VehicleState]] = {}
        for vehicle in world.all_vehicles():
            if vehicle.membership.leader_id is not None:
                grouped.setdefault(vehicle.membership.leader_id, []).append(vehicle)
        return grouped

    def _advance_dissolution(self, world: WorldState):
        dependents = self._dependents(world)
        for leader in [veh for veh in world.all_vehicles() if veh.membership.role is PlatoonRole.LEADER]:
            if leader.membership.split_countdown > 0:
                continue
            if any(veh.membership.role is PlatoonRole.DISSOLVING for veh in dependents.get(leader.id, [])):
                continue
            followers = world.platoon_members(leader.id)[1:]
            if followers:
                tail = followers[-1]
                tail.membership = PlatoonMembership(role=PlatoonRole.DISSOLVING, leader_id=leader.id)
                world.log("detach", [tail.id, leader.id], tail.x)

    def _update_membership_progress(self, world: WorldState):
        bp = self.bp
        for vehicle in world.all_vehicles():
            membership = vehicle.membership
            if membership.role is not PlatoonRole.DISSOLVING and not membership.joining:
                continue
            ahead = world.leader_of(vehicle.id)
            gap = math.inf if ahead is None else world.gap(vehicle, ahead)
            if membership.role is PlatoonRole.FOLLOWER and membership.joining:
                if gap <= bp.idm.s0 + bp.t_g * vehicle.v + bp.join_margin:
                    membership.joining = False
            elif membership.role is PlatoonRole.DISSOLVING:
                if gap >= bp.t_p * vehicle.v:
                    vehicle.membership = PlatoonMembership()
                    world.log("free", [vehicle.id], vehicle.x)
        dependents = self._dependents(world)
        for leader in [veh for veh in world.all_vehicles() if veh.membership.role is PlatoonRole.LEADER]:
            if dependents.get(leader.id):
                continue
            leader.membership = PlatoonMembership()
            world.log("free", [leader.id], leader.x)

    # ---- lane changing ----------------------------------------------------

    def _recent_change(self, world: WorldState, vehicle: Optional[VehicleState]) -> bool:
        return vehicle is not None and world.clock - vehicle.last_lane_change_time < self.bp.t_lc

    def _qualifies(self, world: WorldState, vehicle: VehicleState) -> bool:
        bp = self.bp
        if vehicle.is_subject or not vehicle.membership.is_free or vehicle.changing_lane:
            return False
        target_lane = vehicle.lane.other
        leader = world.leader_of(vehicle.id)
        follower = world.follower_of(vehicle.id)
        if leader is not None and world.gap(vehicle, leader) <= bp.d_cg:
            return False
        target_leader = world.leader_at(target_lane, vehicle.x)
        if target_leader is not None and target_leader.rear - vehicle.x <= bp.d_cg:
            return False
        target_follower = world.follower_at(target_lane, vehicle.x)
        if target_follower is not None:
            if target_follower.membership.role is PlatoonRole.FOLLOWER:
                return False
            if vehicle.rear - target_follower.x <= bp.d_cg:
                return False
        if any(veh.x == vehicle.x for veh in world.lanes[target_lane]):
            return False
        return not any(self._recent_change(world, veh) for veh in (vehicle, leader, follower))

    def rlc_lane_change(self, world: WorldState) -> Optional[int]:
        """
        Random lane changing; at most one vehicle per epoch

        Qualified free agents are visited from upstream to downstream, each
        intending to change with probability p_change; the first intender moves.

        Args:
            world: Current world

        Returns:
            Id of the vehicle that changed lane, or None
        """
        bp = self.bp
        candidates = sorted(
            (veh for veh in world.all_vehicles() if self._qualifies(world, veh)),
            key=lambda veh: (veh.x, veh.id),
        )
        for vehicle in candidates:
            if world.rng.random("lane_change") >= bp.p_change:
                continue
            source = vehicle.lane
            target_leader = world.leader_at(source.other, vehicle.x)
            world.move_to_lane(vehicle.id, source.other)
            vehicle.lateral = bp.lane_width
            vehicle.lane_change_until = world.clock + bp.t_lcp
            vehicle.lane_change_speed = (
                target_leader.v if target_leader is not None else world.network.v_max(source.other)
            )
            vehicle.last_lane_change_time = world.clock
            world.log("lane_change", [vehicle.id], vehicle.x, f"{source.value}->{source.other.value}")
            return vehicle.id
        return None

    # ---- car following ----------------------------------------------------

    def _accelerations(self, world: WorldState, lane: Lane) -> np.ndarray:
        bp = self.bp
        vehicles = world.lanes[lane]
        if not vehicles:
            return np.zeros(0)
        v = np.array([veh.v for veh in vehicles])
        x = np.array([veh.x for veh in vehicles])
        rear = np.array([veh.rear for veh in vehicles])
        gap = np.full(len(vehicles), np.inf)
        dv = np.zeros(len(vehicles))
        gap[1:] = rear[:-1] - x[1:]
        dv[1:] = v[1:] - v[:-1]
        if np.any(gap <= 0):
            index = int(np.flatnonzero(gap <= 0)[0])
            raise SimulationIntegrityError(
                f"Overlap in {lane.value} lane at vehicle {vehicles[index].id}, t={world.clock:.1f}"
            )
        follower = np.array([veh.membership.role is PlatoonRole.FOLLOWER for veh in vehicles])
        T = np.where(follower, bp.t_g, bp.t_p)
        v0 = np.full(len(vehicles), world.network.v_max(lane))
        accel = idm_accel_array(v, gap, dv, v0, T, follower, bp.idm, dt=world.tau_s)
        for i, veh in enumerate(vehicles):
            if veh.changing_lane and veh.lane_change_speed is not None:
                remaining = max(veh.lane_change_until - world.clock, world.tau_s)
                ramp = float(np.clip((veh.lane_change_speed - veh.v) / remaining, -bp.idm.b, bp.idm.a))
                accel[i] = max(min(accel[i], ramp), -veh.v / world.tau_s)
        return accel

    def _integrate(self, world: WorldState, subject_update: Optional[SubjectUpdate], report: StepReport):
        bp = self.bp
        tau = world.tau_s
        t_end = world.clock + tau
        accelerations = {lane: self._accelerations(world, lane) for lane in (Lane.LEFT, Lane.RIGHT)}
        subject_motion = None
        if subject_update is not None and world.subject is not None:
            subject_motion = subject_update(world, t_end)

        for lane in (Lane.LEFT, Lane.RIGHT):
            ahead: Optional[VehicleState] = None
            for vehicle, accel in zip(world.lanes[lane], accelerations[lane]):
                x_old = vehicle.x
                vehicle.prev_x = x_old
                if vehicle.is_subject and subject_motion is not None:
                    x_new, v_new = subject_motion.x, max(subject_motion.v, 0.0)
                else:
                    v_new = max(0.0, vehicle.v + float(accel) * tau)
                    x_new = x_old + v_new * tau
                if ahead is not None:
                    limit = ahead.rear - bp.safety_gap
                    if x_new > limit:
                        x_new = max(x_old, limit)
                        v_new = min(v_new, max(0.0, (x_new - x_old) / tau), ahead.v)
                        report.clamped.append(vehicle.id)
                        if vehicle.is_subject:
                            report.subject_clamped = True
                            world.log("emergency", [vehicle.id, ahead.id], x_new, "clamped")
                vehicle.a = (v_new - vehicle.v) / tau
                if vehicle.is_subject and subject_motion is not None and vehicle.id not in report.clamped:
                    vehicle.a = subject_motion.a
                vehicle.x = x_new
                vehicle.v = v_new
                ahead = vehicle

        for vehicle in world.all_vehicles():
            if vehicle.changing_lane:
                if t_end >= vehicle.lane_change_until - 1e-9:
                    vehicle.lane_change_until = None
                    vehicle.lane_change_speed = None
                    vehicle.lateral = 0.0
                else:
                    vehicle.lateral = bp.lane_width * (vehicle.lane_change_until - t_end) / bp.t_lcp

        subject = world.subject
        if subject is not None:
            if subject_motion is not None:
                subject.lateral = subject_motion.y
                lane = Lane.LEFT if subject_motion.y >= bp.lane_width / 2.0 else Lane.RIGHT
            else:
                lane = subject.lane
            world.reindex()
            if lane is not subject.lane:
                source = subject.lane
                world.move_to_lane(subject.id, lane)
                subject.last_lane_change_time = world.clock
                world.log("lane_change", [subject.id], subject.x, f"{source.value}->{lane.value}")
                report.lane_changes.append(subject.id)
        world.reindex()

    # ---- epoch ------------------------------------------------------------

    def step(self, world: WorldState, subject_update: Optional[SubjectUpdate] = None) -> StepReport:
        """
        Advance the world by tau_s

        Args:
            world: World to mutate
            subject_update: Supplies the subject's state at the end of the epoch

        Returns:
            StepReport of what happened

        Raises:
            SimulationIntegrityError: on overlap or non-finite state after the step
        """
        report = StepReport()
        report.exited = self.try_exit_offramp(world)
        report.spawned = [veh.id for veh in self.try_spawn_onramp(world)]
        report.spawned += [veh.id for veh in self.inflow(world)]
        self.merge_split_at_transitions(world)
        changed = self.rlc_lane_change(world)
        if changed is not None:
            report.lane_changes.append(changed)
        self._integrate(world, subject_update, report)
        report.ended = self.remove_finished(world)
        world.step_count += 1
        world.check_integrity()
        return report

    # ---- initial state ----------------------------------------------------

    def populate(self, world: WorldState, kind: TrafficStateKind):
        """Place vehicles at Greenberg equilibrium spacing with Gaussian jitter"""
        bp = self.bp
        network = world.network
        k_j = jam_density(bp.vehicle_length, bp.idm.s0)
        for lane in (Lane.LEFT, Lane.RIGHT):
            k_m = capacity_density(bp.t_p, network.v_m(lane))
            low, high = kind.density_band
            density = min(world.rng.uniform("warmup", low * k_m, high * k_m), k_j)
            spacing = 1.0 / density
            speed = greenberg_speed(density, network.v_m(lane), k_j, network.v_max(lane))
            self.inflow_profile[lane] = (spacing, speed)
            bound = max(0.0, min(2.0 * bp.warmup_sigma, (spacing - bp.vehicle_length - bp.safety_gap) / 2.0))
            placed = []
            x = network.total_length - spacing / 2.0
            while x >= -bp.approach_length:
                jitter = float(np.clip(world.rng.normal("warmup", 0.0, bp.warmup_sigma), -bound, bound))
                enabled = world.rng.random("warmup") >= bp.p_npe
                placed.append(VehicleState(
                    id=world.new_id(), lane=lane, x=x + jitter, v=speed,
                    length=bp.vehicle_length, platoon_enabled=enabled,
                ))
                x -= spacing
            world.add_vehicles(placed)
            logger.info(
                f"Placed {len(placed)} vehicles in the {lane.value} lane "
                f"(k={density:.5f} veh/m, v={speed:.2f} m/s)"
            )

    def _subject_slot_ok(self, world: WorldState, x: float) -> bool:
        leader = world.leader_at(Lane.RIGHT, x)
        follower = world.follower_at(Lane.RIGHT, x)
        if any(veh.x == x for veh in world.lanes[Lane.RIGHT]):
            return False
        if leader is not None and leader.rear - x < self.bp.idm.s0:
            return False
        if follower is not None and x - self.bp.vehicle_length - follower.x < self.bp.idm.s0:
            return False
        return True

    def _nearest_slot(self, world: WorldState) -> float:
        vehicles = world.lanes[Lane.RIGHT]
        need = self.bp.vehicle_length + 2.0 * self.bp.safety_gap
        best: Optional[float] = None
        for leader, follower in zip(vehicles, vehicles[1:]):
            room = leader.rear - follower.x
            if room < need:
                continue
            x = follower.x + self.bp.vehicle_length + (room - self.bp.vehicle_length) / 2.0
            if best is None or abs(x) < abs(best):
                best = x
        if best is None:
            raise SimulationIntegrityError("No gap in the right lane can take the subject vehicle")
        return best

    def warmup(self, kind: TrafficStateKind, network: RoadNetwork, seed: int, tau_s: Optional[float] = None) -> WorldState:
        """
        Build a warmed-up world with the subject at the trip origin

        Args:
            kind: Traffic state to reproduce
            network: Road network
            seed: Scenario seed
            tau_s: Update step; defaults to the behavior step

        Returns:
            WorldState whose subject sits in the right lane near x = 0
        """
        bp = self.bp
        world = WorldState(
            network=network,
            rng=ScenarioRandom(seed),
            tau_s=tau_s or bp.tau_s,
            lane_width=bp.lane_width,
        )
        self.populate(world, kind)
        for _ in range(int(round(bp.warmup_time / world.tau_s))):
            self.step(world)

        origin = 0.0
        waited = 0
        max_wait = int(round(bp.insertion_wait / world.tau_s))
        while not self._subject_slot_ok(world, origin) and waited < max_wait:
            self.step(world)
            waited += 1
        if not self._subject_slot_ok(world, origin):
            origin = self._nearest_slot(world)
            logger.warning(f"Subject slot at x=0 stayed blocked for {bp.insertion_wait:.0f}s, using x={origin:.2f}")

        leader = world.leader_at(Lane.RIGHT, origin)
        speed = leader.v if leader is not None else network.v_m(Lane.RIGHT)
        subject = world.add_vehicle(VehicleState(
            id=world.new_id(), lane=Lane.RIGHT, x=origin, v=min(speed, network.v_max(Lane.RIGHT)),
            length=bp.vehicle_length, is_subject=True,
        ))
        world.log("enter", [subject.id], origin, "subject")
        logger.info(
            f"✅ Warm-up finished for {kind.value} traffic: {world.vehicle_count()} vehicles, "
            f"subject {subject.id} at x={origin:.2f}"
        )
        return world
