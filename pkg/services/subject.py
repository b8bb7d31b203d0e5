"""
Subject Driver
Executes the committed plan and turns it into platoon membership changes
"""

import logging
import math
from typing import List, Optional

from core.maneuver import SubAction
from core.planner import MERGE_GAP_MARGIN, MergeCommitment, ReplanOutcome, TrajectoryPlanner, is_merge_target
from core.quintic import BoundaryState, Trajectory
from core.world import PlatoonMembership, PlatoonRole, SimulationIntegrityError, WorldState
from services.controllers import ControllerKind, plan_allowed
from services.traffic import BehaviorParams, StepReport, SubjectMotion, schedule_split

logger = logging.getLogger(__name__)

MERGE_SPEED_TOLERANCE = 1.0


class SubjectDriver:
    """
    Optimal-control driver of the subject vehicle

    Replans every update period while the previously committed trajectory is
    being executed. Merges commence when the subject crosses a piece
    transition inside a Merge segment and complete once the gap behind the
    target has closed. Until then every replan continues the merge under a
    MergeCommitment that makes the gap keep shrinking. Splits commence at a
    transition crossed inside a Split segment.
    """

    def __init__(
        self,
        controller: ControllerKind,
        planner: TrajectoryPlanner,
        bp: BehaviorParams,
        budget_multiple: Optional[float] = None,
    ):
        """
        Initialize the driver

        Args:
            controller: Controller variant; must be an optimal-control one
            planner: Trajectory planner
            bp: Behavior parameters (platoon schedule and gaps)
            budget_multiple: Abort when a replan takes longer than this many update periods
        """
        if not controller.optimal:
            raise ValueError(f"{controller.value} does not use the optimal controller")
        self.controller = controller
        self.planner = planner
        self.bp = bp
        self.budget_multiple = budget_multiple
        self.committed: Optional[Trajectory] = None
        self.commenced_merge: Optional[MergeCommitment] = None
        self.merge_point: Optional[float] = None
        self.join_x: Optional[float] = None
        self.force_fallback = False
        self.wall_times: List[float] = []
        self.fallbacks = 0
        self.over_budget = 0
        self._next_replan = -math.inf
        self._step_start = 0.0

    # ---- planning ---------------------------------------------------------

    def _distance_in_platoon_km(self, world: WorldState) -> float:
        if self.join_x is None:
            return 0.0
        return (world.subject.x - self.join_x) / 1000.0

    def _allowed(self, world: WorldState):
        membership = world.subject.membership
        distance = self._distance_in_platoon_km(world)
        return lambda plan: plan_allowed(self.controller, plan, membership, distance)

    def _abort_merge(self, world: WorldState, reason: str):
        subject = world.subject
        world.log("subject_merge_abort", [subject.id], subject.x, reason)
        logger.warning(f"Subject merge behind {self.commenced_merge.target_id} aborted: {reason}")
        self.commenced_merge = None
        self.merge_point = None

    def before_step(self, world: WorldState) -> Optional[ReplanOutcome]:
        """Replan when due; returns the cycle outcome"""
        planner = self.planner
        subject = world.subject
        if self.committed is None:
            self.committed = planner.bootstrap(world)
        if self.force_fallback:
            start = BoundaryState(
                x=subject.x, vx=subject.v, ax=0.0, y=subject.lateral,
            )
            self.committed = Trajectory([planner.fallback_segment(world, start, world.clock)])
            self.force_fallback = False
        self._step_start = world.clock
        if world.clock < self._next_replan - 1e-9:
            return None
        self._next_replan = world.clock + planner.settings.t_upd

        outcome = planner.replan_cycle(world, self.committed, self._allowed(world), self.commenced_merge)
        self.committed = outcome.committed
        self.wall_times.append(outcome.wall_time)
        if outcome.fallback:
            self.fallbacks += 1
        if outcome.wall_time > planner.settings.t_upd:
            self.over_budget += 1
            if self.budget_multiple is not None and outcome.wall_time > self.budget_multiple * planner.settings.t_upd:
                raise SimulationIntegrityError(
                    f"Replan took {outcome.wall_time:.3f}s, over {self.budget_multiple}x the update period"
                )
        if self.commenced_merge is not None:
            first = None if outcome.fallback else outcome.result.trajectory.segments[0]
            if first is None or first.sub_action is not SubAction.MERGE:
                self._abort_merge(world, "plan changed")
        return outcome

    def motion(self, world: WorldState, t_end: float) -> SubjectMotion:
        """Committed state at the end of the step"""
        sample = self.committed.eval(t_end)
        return SubjectMotion(x=sample.x, v=max(sample.vx, 0.0), a=sample.ax, y=sample.y)

    # ---- execution --------------------------------------------------------

    def after_step(self, world: WorldState, report: StepReport):
        """Membership changes caused by the step just executed"""
        subject = world.subject
        if report.subject_clamped:
            self.force_fallback = True
            if self.commenced_merge is not None:
                self._abort_merge(world, "emergency clamp")

        membership = subject.membership
        if membership.role is PlatoonRole.FREE and self.join_x is not None:
            self.join_x = None

        segment = self.committed.segment_at(self._step_start + 1e-6)
        point = None
        if subject.prev_x is not None:
            point = world.network.crossed_transition(subject.prev_x, subject.x)

        if segment.sub_action is SubAction.MERGE and membership.is_free and point is not None:
            if self.commenced_merge is None:
                leader = world.leader_of(subject.id)
                if is_merge_target(world, leader) and world.gap(subject, leader) <= self.planner.settings.comm_range:
                    self.commenced_merge = MergeCommitment(
                        target_id=leader.id, time=world.clock, gap=world.gap(subject, leader),
                    )
                    self.merge_point = point
                    world.log("subject_merge_start", [subject.id, leader.id], point)

        if self.commenced_merge is not None:
            self._try_complete_merge(world)

        if segment.sub_action is SubAction.SPLIT and membership.role is PlatoonRole.FOLLOWER and point is not None:
            subject.membership = PlatoonMembership(role=PlatoonRole.DISSOLVING, leader_id=membership.leader_id)
            self.join_x = None
            world.log("subject_split", [subject.id], point)

    def _try_complete_merge(self, world: WorldState):
        subject = world.subject
        leader = world.leader_of(subject.id)
        if leader is None or leader.id != self.commenced_merge.target_id:
            self._abort_merge(world, "target changed")
            return
        if not is_merge_target(world, leader):
            self._abort_merge(world, "target no longer accepts followers")
            return
        gap = world.gap(subject, leader)
        if gap > self.bp.t_g * subject.v + MERGE_GAP_MARGIN or abs(subject.v - leader.v) > MERGE_SPEED_TOLERANCE:
            return
        if leader.membership.role is PlatoonRole.FREE:
            leader.membership = PlatoonMembership(
                role=PlatoonRole.LEADER,
                split_countdown=schedule_split(leader.lane, self.bp, world.rng),
            )
            platoon_leader = leader
        elif leader.membership.role is PlatoonRole.LEADER:
            platoon_leader = leader
        else:
            platoon_leader = world.vehicle(leader.membership.leader_id)
        subject.membership = PlatoonMembership(
            role=PlatoonRole.FOLLOWER,
            leader_id=platoon_leader.id,
            split_countdown=platoon_leader.membership.split_countdown,
        )
        self.join_x = subject.x
        world.log(
            "subject_merge", [subject.id, platoon_leader.id], self.merge_point,
            f"countdown={platoon_leader.membership.split_countdown}",
        )
        self.commenced_merge = None
        self.merge_point = None
