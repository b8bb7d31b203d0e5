"""
Optimal Control Planner
Grid search over quintic sub-action sequences minimizing the generalized cost
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from core.energy import TEN_KM, CostBreakdown, CostParams, beta_for, integrate_cost, integrate_energy
from core.idm import IdmParams, idm_accel
from core.maneuver import (
    ManeuverPlan,
    SubAction,
    SubjectMode,
    TargetState,
    advance,
    mode_for,
    sequence,
    targets,
)
from core.quintic import (
    BoundaryState,
    PlanLimits,
    QuinticSegment,
    SegmentBatch,
    Trajectory,
    batch_feasibility,
    lateral_within_limits,
    solve_batch,
)
from core.road import Lane
from core.world import (
    LeaderPrediction,
    PlatoonRole,
    PredictedVehicle,
    VehicleState,
    WorldState,
    predict_leaders,
)

logger = logging.getLogger(__name__)

PlanFilter = Callable[[ManeuverPlan], bool]

# A merge is complete once the gap is within this margin of t_g * v.
MERGE_GAP_MARGIN = 2.0

# Relative and absolute give-back on the fuel lower bound used for pruning.
BOUND_SLACK = 1e-6
BOUND_PAD = 1e-9


@dataclass(frozen=True)
class PlannerSettings:
    """Grid resolution and planner bookkeeping"""
    speed_step: float = 2.0
    duration_step: float = 1.0
    sample_dt: float = 0.1
    quadrature_dt: float = 0.01
    t_upd: float = 0.4
    min_progress_ratio: float = 0.9
    comm_range: float = 300.0
    merge_gap_step: float = 5.0
    merge_closing_rate: float = 1.0

    def __post_init__(self):
        for name in ("speed_step", "duration_step", "sample_dt", "quadrature_dt", "t_upd",
                     "merge_gap_step", "merge_closing_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"Planner setting {name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.min_progress_ratio <= 1.0:
            raise ValueError(f"min_progress_ratio must be in [0, 1], got {self.min_progress_ratio}")


@dataclass(frozen=True)
class MergeCommitment:
    """
    A merge that commenced at a transition and has not completed yet

    Every later merge segment toward the same target must end no farther
    behind it than gap - closing_rate * (t_end - time).
    """
    target_id: int
    time: float
    gap: float

    def gap_ceiling(self, t_end: float, closing_rate: float) -> float:
        return self.gap - closing_rate * (t_end - self.time)


@dataclass
class PlanResult:
    """Best plan for one target (or the overall choice of select_plan)"""
    feasible: bool
    trajectory: Optional[Trajectory] = None
    target: Optional[TargetState] = None
    plan: Optional[ManeuverPlan] = None
    cost: Optional[CostBreakdown] = None
    objective: float = math.inf
    reason: str = ""

    @classmethod
    def infeasible(cls, reason: str, plan: Optional[ManeuverPlan] = None) -> "PlanResult":
        return cls(feasible=False, plan=plan, target=plan.target if plan else None, reason=reason)


@dataclass
class ReplanOutcome:
    committed: Trajectory
    result: PlanResult
    fallback: bool
    wall_time: float


def segment_cost(
    segment: QuinticSegment,
    beta: float,
    params: CostParams,
    quadrature_dt: float = 0.01,
) -> CostBreakdown:
    """
    Generalized cost of one segment

    Fuel is eta_f * beta * integral of the resistance power, integrated with a
    fixed quadrature step; time is eta_t * duration.

    Args:
        segment: Quintic segment
        beta: Platoon fuel coefficient for the segment
        params: Cost parameters
        quadrature_dt: Integration step in seconds

    Returns:
        CostBreakdown
    """
    times = quadrature_grid(segment.t_start, segment.t_end, quadrature_dt)
    values = segment.sample(times)
    return integrate_cost(times, values["vx"], values["ax"], beta, params)


def quadrature_grid(t_start: float, t_end: float, quadrature_dt: float) -> np.ndarray:
    steps = max(1, int(math.ceil((t_end - t_start) / quadrature_dt - 1e-9)))
    return np.linspace(t_start, t_end, steps + 1)


def plan_rank(result: PlanResult, home: TargetState, order: int) -> Tuple[float, bool, int, int]:
    """
    Sort key among feasible plans

    Lowest objective first; ties go to the target that keeps the current
    state, then to fewer sub-actions, then to table order.
    """
    return round(result.objective, 12), result.target is not home, len(result.plan), order


def subject_mode(world: WorldState) -> SubjectMode:
    """Subject mode derived from its lane and platoon membership"""
    subject = world.subject
    membership = subject.membership
    if membership.role is PlatoonRole.DISSOLVING:
        return mode_for(subject.lane, in_platoon=True, passive=True)
    if membership.role in (PlatoonRole.FOLLOWER, PlatoonRole.LEADER):
        return mode_for(subject.lane, in_platoon=True, passive=membership.split_countdown <= 0)
    return mode_for(subject.lane)


def current_target(mode: SubjectMode) -> TargetState:
    """Target that keeps the subject in its present state"""
    side = "Left" if mode.lane is Lane.LEFT else "Right"
    return TargetState(f"{side}{'Platoon' if mode.in_platoon else 'Free'}")


def is_merge_target(world: WorldState, candidate: Optional[VehicleState]) -> bool:
    """Whether the subject may merge behind this vehicle"""
    if candidate is None or candidate.is_subject or not candidate.platoon_enabled:
        return False
    if candidate.changing_lane:
        return False
    membership = candidate.membership
    if membership.role is PlatoonRole.DISSOLVING or membership.joining:
        return False
    if membership.is_member and membership.split_countdown <= 0:
        return False
    return True


@dataclass
class _Node:
    """Partial candidate: the segments chosen so far and where they leave the subject"""
    lower: float
    index: int
    state: BoundaryState
    t: float
    mode: SubjectMode
    chain: Tuple[Tuple[SegmentBatch, int], ...]
    fuel: float
    energy: float
    joining: bool = False


class TrajectoryPlanner:
    """
    Optimal-control planner for the subject vehicle

    Every candidate is a chain of quintic segments, one per sub-action, whose
    free variables (end speed, duration, merge end gap) are drawn from a
    discrete grid. The final segment always fills the horizon. Segments that
    share a start state and duration are solved, checked and costed together
    as one batch; partial chains whose best possible completion cannot beat
    the cheapest complete candidate are not expanded.
    """

    def __init__(
        self,
        limits: PlanLimits,
        params: CostParams,
        settings: Optional[PlannerSettings] = None,
        idm: Optional[IdmParams] = None,
    ):
        """
        Initialize the planner

        Args:
            limits: Speed/acceleration/jerk/spacing bounds and horizon
            params: Cost parameters (fuel price, value of time, betas)
            settings: Grid resolution; defaults to PlannerSettings()
            idm: Base IDM parameters for the fallback and progress reference
        """
        self.limits = limits
        self.params = params
        self.settings = settings or PlannerSettings()
        self.idm = idm or IdmParams()

    # ---- cost --------------------------------------------------------------

    def batch_energy(self, batch: SegmentBatch) -> np.ndarray:
        """Beta-weighted energy of every row, on the same quadrature as segment_cost"""
        times = quadrature_grid(batch.t_start, batch.t_end, self.settings.quadrature_dt)
        values = batch.sample(times, ("vx", "ax"))
        return integrate_energy(times, values["vx"], values["ax"], batch.beta, self.params)

    def _beta_floor(self, kind: SubAction, mode: SubjectMode) -> float:
        if kind is SubAction.WAIT and mode.in_platoon:
            if mode.passive:
                return beta_for(self.params, kind, "dissolving")
            return min(beta_for(self.params, kind, "follower"), beta_for(self.params, kind, "joining"))
        return beta_for(self.params, kind, "free")

    def _segment_fuel_floor(self, distance, duration: float, beta: float) -> np.ndarray:
        # constant speed is the cheapest way to cover a distance in a given time
        d = np.maximum(distance, 0.0)
        params = self.params
        scale = params.eta_f * beta * (1.0 - BOUND_SLACK)
        return scale * ((params.gamma_rr + params.gamma_gr) * d + params.gamma_ar * d ** 3 / duration ** 2)

    def _objective_floor(self, fuel, progress, remaining: float, beta_min: float, v_top: float,
                         floor: float, time_cost: float) -> np.ndarray:
        """
        Lowest objective any completion of the given prefixes can reach

        Over the remaining R seconds and distance D the fuel is at least
        eta_f * beta_min * ((gamma_rr + gamma_gr) * D + gamma_ar * D^3 / R^2).
        The resulting per-10 km objective is minimized over the distances the
        progress floor and the speed cap still allow.

        Args:
            fuel: Fuel dollars spent by each prefix
            progress: Distance covered by each prefix
            remaining: Seconds left in the horizon
            beta_min: Smallest fuel coefficient among the sub-actions still ahead
            v_top: Highest lane speed cap still reachable
            floor: Progress floor of the whole candidate
            time_cost: Time dollars of the whole horizon

        Returns:
            Array of lower bounds; inf where no completion can meet the floor
        """
        fuel = np.asarray(fuel, dtype=float)
        progress = np.maximum(np.asarray(progress, dtype=float), 0.0)
        fixed = fuel + time_cost - BOUND_PAD
        params = self.params
        scale = params.eta_f * beta_min * (1.0 - BOUND_SLACK)
        k1 = scale * (params.gamma_rr + params.gamma_gr)
        k3 = scale * params.gamma_ar / remaining ** 2
        d_lo = np.maximum(floor - progress - 1e-6, 0.0)
        d_hi = (1.01 * v_top + self.limits.tolerance) * remaining

        def numerator(d):
            return fixed + k1 * d + k3 * d ** 3

        def objective(d):
            return numerator(d) * TEN_KM / np.maximum(progress + d, 1.0)

        # below one meter of total progress the denominator is pinned and the objective rises with D
        short = np.where(progress + d_lo < 1.0, numerator(d_lo) * TEN_KM, np.inf)

        a = np.maximum(d_lo, 1.0 - progress)
        b = np.full_like(a, d_hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            if k3 <= 0.0:
                inner = np.minimum(objective(a), objective(b))
            else:
                def slope(d):
                    return 2.0 * k3 * d ** 3 + 3.0 * k3 * progress * d ** 2 + k1 * progress - fixed

                g_a, g_b = slope(a), slope(b)
                lo, hi = a.copy(), b.copy()
                for _ in range(8):
                    g_hi = slope(hi)
                    hi = np.maximum(hi - g_hi / (6.0 * k3 * hi * (hi + progress)), lo)
                    g_lo, g_hi = slope(lo), slope(hi)
                    step = np.where(g_hi > g_lo, -g_lo * (hi - lo) / (g_hi - g_lo), 0.0)
                    lo = np.clip(lo + step, lo, hi)
                bracket = numerator(lo) * TEN_KM / np.maximum(progress + hi, 1.0)
                inner = np.where(g_a >= 0.0, objective(a), np.where(g_b <= 0.0, objective(b), bracket))
        inner = np.where(a <= b, inner, np.inf)
        bound = np.minimum(short, inner)
        return np.where(d_lo <= d_hi, bound, np.inf)

    # ---- grid helpers ------------------------------------------------------

    def _speed_grid(self, lane: Lane, v_start: float, duration: float) -> np.ndarray:
        v_cap = self.limits.v_max(lane)
        grid = list(np.arange(0.0, v_cap + 1e-9, self.settings.speed_step))
        if 0.0 <= v_start <= v_cap:
            grid.append(v_start)
        reach = self.limits.a_max * duration
        return np.array(sorted({round(float(v), 9) for v in grid if abs(v - v_start) <= reach + 1e-9}))

    @staticmethod
    def _natural_end(state: BoundaryState, v_end, duration: float):
        return state.x + 0.5 * (state.vx + v_end) * duration + state.ax * duration ** 2 / 12.0

    def _merge_gaps(self, closest: float, widest: float) -> np.ndarray:
        if widest <= closest + 1e-9:
            return np.array([closest])
        return np.append(np.arange(closest, widest - 1e-9, self.settings.merge_gap_step), widest)

    def _durations(self, sequence_: Tuple[SubAction, ...], index: int, remaining: float) -> List[float]:
        last = index == len(sequence_) - 1
        if last:
            return [remaining] if remaining > 1e-9 else []
        step = self.settings.duration_step
        needed = 0.0
        for later in range(index + 1, len(sequence_)):
            is_last = later == len(sequence_) - 1
            if is_last or sequence_[later] is not SubAction.WAIT:
                needed += step
        durations = [0.0] if sequence_[index] is SubAction.WAIT else []
        d = step
        while d <= remaining - needed + 1e-9:
            durations.append(d)
            d += step
        return durations

    @staticmethod
    def _transition_between(transitions: np.ndarray, x_from: float, x_to: float) -> bool:
        if x_to < x_from:
            return False
        index = int(np.searchsorted(transitions, x_from, side="left"))
        return index < len(transitions) and transitions[index] <= x_to

    @staticmethod
    def _reaches_transition(transitions: np.ndarray, x_from: float, x_to: np.ndarray) -> np.ndarray:
        index = int(np.searchsorted(transitions, x_from, side="left"))
        if index >= len(transitions):
            return np.zeros(np.shape(x_to), dtype=bool)
        return np.asarray(x_to) >= transitions[index]

    def _batch(
        self,
        kind: SubAction,
        state: BoundaryState,
        t: float,
        duration: float,
        mode: SubjectMode,
        world: WorldState,
        prediction: LeaderPrediction,
        commitment: Optional[MergeCommitment],
        joining: bool,
    ) -> Optional[SegmentBatch]:
        """Grid candidates for one sub-action from one start state over one duration"""
        limits = self.limits
        lane = mode.lane
        t_end = t + duration
        end_lane = lane.other if kind is SubAction.LANE_CHANGE else lane
        y_end = limits.lane_center(end_lane)
        if not lateral_within_limits(state, y_end, duration, t, limits, self.settings.sample_dt):
            return None
        transitions = world.network.transition_points()

        if kind in (SubAction.WAIT, SubAction.LANE_CHANGE):
            if kind is SubAction.WAIT and mode.in_platoon:
                time_gap = limits.t_g
                label = "dissolving" if mode.passive else ("joining" if joining else "follower")
                beta = beta_for(self.params, kind, label)
            else:
                time_gap = None
                beta = beta_for(self.params, kind, "free")
            speeds = self._speed_grid(end_lane, state.vx, duration)
            x_end = self._natural_end(state, speeds, duration)
            return solve_batch(state, x_end, speeds, y_end, duration, t, kind, time_gap, beta)

        leader: Optional[PredictedVehicle] = prediction.leaders.get(lane)
        beta = beta_for(self.params, kind, "free")

        if kind is SubAction.MERGE:
            if leader is None or not is_merge_target(world, world.get(leader.id)):
                return None
            if commitment is not None and commitment.target_id != leader.id:
                return None
            if leader.rear(t) - state.x > self.settings.comm_range:
                return None
            closest = limits.t_g * leader.v
            widest = limits.t_p * leader.v
            if commitment is not None:
                widest = min(widest, commitment.gap_ceiling(t_end, self.settings.merge_closing_rate))
            x_end = float(leader.rear(t_end)) - self._merge_gaps(closest, widest)
            if commitment is None:
                x_end = x_end[self._reaches_transition(transitions, state.x, x_end)]
            if x_end.size == 0:
                return None
            return solve_batch(state, x_end, leader.v, y_end, duration, t, kind, limits.t_g, beta)

        if kind is SubAction.SPLIT:
            speeds = self._speed_grid(lane, state.vx, duration)
            x_end = self._natural_end(state, speeds, duration)
            if leader is not None:
                x_end = np.minimum(x_end, float(leader.rear(t_end)) - limits.t_p * speeds)
            subject = world.subject
            if subject is not None and subject.membership.role is PlatoonRole.FOLLOWER:
                keep = self._reaches_transition(transitions, state.x, x_end)
                speeds, x_end = speeds[keep], x_end[keep]
            if x_end.size == 0:
                return None
            return solve_batch(state, x_end, speeds, y_end, duration, t, kind, limits.t_g, beta)
        return None

    def _unreachable(
        self,
        plan: ManeuverPlan,
        start: BoundaryState,
        t0: float,
        world: WorldState,
        prediction: LeaderPrediction,
        commitment: Optional[MergeCommitment],
    ) -> Optional[str]:
        """Reason a sequence cannot produce any candidate, decided before the search"""
        limits = self.limits
        seq = plan.sequence
        lanes = {plan.mode.lane, plan.target.lane}
        reach = start.x + (1.01 * max(limits.v_max(lane) for lane in lanes) + limits.tolerance) * limits.horizon
        transitions = world.network.transition_points()
        if SubAction.MERGE in seq:
            leader = prediction.leaders.get(plan.target.lane)
            if leader is None or not is_merge_target(world, world.get(leader.id)):
                return "no merge target"
            if commitment is not None and commitment.target_id != leader.id:
                return "merge target changed"
            t_end = t0 + limits.horizon
            if min(float(leader.rear(t0)) - start.x, float(leader.rear(t_end)) - reach) > self.settings.comm_range:
                return "merge target out of range"
            if commitment is None and not self._transition_between(transitions, start.x, reach):
                return "no transition in reach"
        subject = world.subject
        if SubAction.SPLIT in seq and subject is not None and subject.membership.role is PlatoonRole.FOLLOWER:
            if not self._transition_between(transitions, start.x, reach):
                return "no transition in reach"
        return None

    # ---- reference ---------------------------------------------------------

    def idm_reference_distance(self, start: BoundaryState, prediction: LeaderPrediction, t0: float, member: bool) -> float:
        """Distance an IDM driver would cover over the horizon from the same start"""
        lane = self.limits.lane_of(start.y)
        leader = prediction.leaders.get(lane)
        params = self.idm.with_target(self.limits.v_max(lane), self.limits.t_g if member else self.limits.t_p)
        dt = self.settings.t_upd
        x, v = start.x, max(start.vx, 0.0)
        for k in range(int(round(self.limits.horizon / dt))):
            t = t0 + k * dt
            gap = math.inf if leader is None else float(leader.rear(t)) - x
            if gap <= 0:
                accel = -v / dt
            else:
                dv = 0.0 if leader is None else v - leader.v
                accel = idm_accel(v, gap, dv, params, dt=dt, platoon_follower=member)
            v = max(0.0, v + accel * dt)
            x_next = x + v * dt
            if leader is not None:
                x_next = max(x, min(x_next, float(leader.rear(t + dt)) - 0.5))
            v = (x_next - x) / dt
            x = x_next
        return x - start.x

    # ---- operations --------------------------------------------------------

    def optimize_sequence(
        self,
        plan: ManeuverPlan,
        start: BoundaryState,
        world: WorldState,
        prediction: LeaderPrediction,
        t_start: Optional[float] = None,
        commitment: Optional[MergeCommitment] = None,
        bound: float = math.inf,
    ) -> PlanResult:
        """
        Cheapest feasible candidate trajectory for one sub-action sequence

        Args:
            plan: Sub-action sequence to carry out
            start: Boundary state at t_start
            world: Frozen world snapshot
            prediction: Neighbor prediction covering t_start + horizon
            t_start: Plan start time; defaults to the world clock
            commitment: Merge already under way; its target needs no transition
                and its merge segments must keep closing the gap
            bound: Candidates with a larger objective are not reported

        Returns:
            PlanResult; feasible=False when no grid candidate passes the checks
        """
        limits = self.limits
        settings = self.settings
        t0 = world.clock if t_start is None else t_start
        if prediction.t0 + prediction.horizon < t0 + limits.horizon - 1e-9:
            raise ValueError("Prediction does not cover the planning horizon")
        reason = self._unreachable(plan, start, t0, world, prediction, commitment)
        if reason is not None:
            return PlanResult.infeasible(reason, plan)

        seq = plan.sequence
        reference = self.idm_reference_distance(start, prediction, t0, plan.mode.in_platoon)
        floor = settings.min_progress_ratio * reference
        time_cost = self.params.eta_t * limits.horizon

        modes = [plan.mode]
        for kind in seq:
            modes.append(advance(modes[-1], kind))
        beta_min = [math.inf] * (len(seq) + 1)
        v_top = [0.0] * (len(seq) + 1)
        for index in range(len(seq) - 1, -1, -1):
            beta_min[index] = min(beta_min[index + 1], self._beta_floor(seq[index], modes[index]))
            v_top[index] = max(v_top[index + 1], limits.v_max(modes[index + 1].lane), limits.v_max(modes[index].lane))

        best: List[Optional[Tuple[float, Tuple[Tuple[SegmentBatch, int], ...], CostBreakdown]]] = [None]
        counts = {"batches": 0, "rows": 0, "pruned": 0}

        def limit() -> float:
            return bound if best[0] is None else min(best[0][0], bound)

        def node_floor(index: int, fuel, progress, t: float) -> np.ndarray:
            return self._objective_floor(fuel, progress, t0 + limits.horizon - t, beta_min[index],
                                         v_top[index], floor, time_cost)

        def expand(node: _Node):
            index = node.index
            kind = seq[index]
            last = index == len(seq) - 1
            remaining = t0 + limits.horizon - node.t
            children: List[_Node] = []
            for duration in self._durations(seq, index, remaining):
                if duration == 0.0:
                    lb = float(node_floor(index + 1, node.fuel, node.state.x - start.x, node.t))
                    children.append(_Node(lb, index + 1, node.state, node.t, modes[index + 1],
                                          node.chain, node.fuel, node.energy, node.joining))
                    continue
                batch = self._batch(kind, node.state, node.t, duration, node.mode, world, prediction,
                                    commitment, node.joining)
                if batch is None or len(batch) == 0:
                    continue
                counts["batches"] += 1
                counts["rows"] += len(batch)
                rows = np.flatnonzero(batch_feasibility(batch, limits, prediction, settings.sample_dt))
                if rows.size == 0:
                    continue
                batch = batch.take(rows)
                ends = batch.end_states()
                progress = ends["x"] - start.x
                t_next = node.t + duration

                if last:
                    keep = progress + 1e-9 >= floor
                    own = self._segment_fuel_floor(ends["x"] - node.state.x, duration, batch.beta)
                    lb = (node.fuel + own + time_cost - BOUND_PAD) * TEN_KM / np.maximum(progress, 1.0)
                    keep &= lb <= limit()
                    if not np.any(keep):
                        continue
                    batch = batch.take(np.flatnonzero(keep))
                    progress = progress[keep]
                    energy = self.batch_energy(batch)
                    fuel = node.fuel + self.params.eta_f * energy
                    objective = (fuel + time_cost) * TEN_KM / np.maximum(progress, 1.0)
                    row = int(np.argmin(objective))
                    if objective[row] <= bound and (best[0] is None or objective[row] < best[0][0] - 1e-12):
                        breakdown = CostBreakdown(
                            energy=node.energy + float(energy[row]),
                            fuel_dollars=float(fuel[row]),
                            time_dollars=time_cost,
                            distance=float(progress[row]),
                        )
                        best[0] = (float(objective[row]), node.chain + ((batch, row),), breakdown)
                    continue

                energy = self.batch_energy(batch)
                fuel = node.fuel + self.params.eta_f * energy
                lbs = node_floor(index + 1, fuel, progress, t_next)
                joining = np.zeros(len(batch), dtype=bool)
                if kind is SubAction.MERGE:
                    leader = prediction.leaders.get(node.mode.lane)
                    gap_end = float(leader.rear(t_next)) - ends["x"]
                    joining = gap_end > limits.t_g * ends["vx"] + MERGE_GAP_MARGIN
                for row in np.flatnonzero(np.isfinite(lbs)):
                    state = BoundaryState(*(float(ends[name][row]) for name in ("x", "vx", "ax", "y", "vy", "ay")))
                    children.append(_Node(
                        float(lbs[row]), index + 1, state, t_next, modes[index + 1],
                        node.chain + ((batch, int(row)),), float(fuel[row]),
                        node.energy + float(energy[row]), bool(joining[row]),
                    ))

            children.sort(key=lambda child: child.lower)
            for position, child in enumerate(children):
                if child.lower > limit():
                    counts["pruned"] += len(children) - position
                    break
                expand(child)

        root_floor = float(node_floor(0, 0.0, 0.0, t0))
        if root_floor <= bound:
            expand(_Node(root_floor, 0, start, t0, plan.mode, (), 0.0, 0.0))
        logger.debug(
            f"{plan.mode.value}->{plan.target.value}: {counts['batches']} batches, "
            f"{counts['rows']} rows, {counts['pruned']} pruned"
        )
        if best[0] is None:
            if math.isfinite(bound):
                return PlanResult.infeasible(f"no candidate below {bound:.6f} among {counts['rows']}", plan)
            return PlanResult.infeasible(f"no feasible candidate among {counts['rows']}", plan)
        objective, chain, breakdown = best[0]
        return PlanResult(
            feasible=True,
            trajectory=Trajectory([batch.segment(row) for batch, row in chain]),
            target=plan.target,
            plan=plan,
            cost=breakdown,
            objective=objective,
        )

    def select_plan(
        self,
        world: WorldState,
        mode: SubjectMode,
        start: Optional[BoundaryState] = None,
        prediction: Optional[LeaderPrediction] = None,
        t_start: Optional[float] = None,
        allowed: Optional[PlanFilter] = None,
        commitment: Optional[MergeCommitment] = None,
    ) -> PlanResult:
        """
        Evaluate all four targets and keep the cheapest feasible one

        Ties prefer the target matching the current state, then fewer
        sub-actions. The target matching the current state is searched first
        and each result bounds the searches that follow. With a commitment,
        only sequences that open with a merge are searched unless none of
        them is feasible.

        Args:
            world: Frozen world snapshot
            mode: Subject mode at the plan start
            start: Start boundary; defaults to the subject's current state
            prediction: Neighbor prediction; computed when omitted
            t_start: Plan start time; defaults to the world clock
            allowed: Optional mask; plans it rejects are skipped
            commitment: Merge already under way

        Returns:
            PlanResult (feasible=False when every target fails)
        """
        subject = world.subject
        if subject is None:
            raise ValueError("World has no subject vehicle")
        t0 = world.clock if t_start is None else t_start
        if start is None:
            start = BoundaryState(x=subject.x, vx=subject.v, ax=subject.a, y=self.limits.lane_center(subject.lane))
        if prediction is None:
            prediction = predict_leaders(
                world, t0 - world.clock + self.limits.horizon, self.settings.sample_dt, self.settings.t_upd
            )
        home = current_target(mode)
        plans = [sequence(mode, target) for target in targets(mode)]
        order = {plan.target: position for position, plan in enumerate(plans)}
        plans = [plan for plan in plans if allowed is None or allowed(plan)]
        plans.sort(key=lambda plan: (plan.target is not home, len(plan), order[plan.target]))

        def search(candidates: List[ManeuverPlan], held: Optional[MergeCommitment]) -> List[PlanResult]:
            found = []
            incumbent = math.inf
            for plan in candidates:
                result = self.optimize_sequence(plan, start, world, prediction, t0, held, incumbent + 1e-9)
                if result.feasible:
                    found.append(result)
                    incumbent = min(incumbent, result.objective)
            return found

        results: List[PlanResult] = []
        if commitment is not None:
            leading = [plan for plan in plans if plan.sequence[0] is SubAction.MERGE]
            results = search(leading, commitment)
            if not results:
                logger.debug(f"No merge continuation behind {commitment.target_id}; searching all targets")
                plans = [plan for plan in plans if plan not in leading]
        if not results:
            results = search(plans, None)
        if not results:
            return PlanResult.infeasible("all targets infeasible")
        return min(results, key=lambda result: plan_rank(result, home, order[result.target]))

    def idm_fallback(
        self,
        world: WorldState,
        start: Optional[BoundaryState] = None,
        prediction: Optional[LeaderPrediction] = None,
        t: Optional[float] = None,
    ) -> float:
        """
        IDM acceleration for the subject against its current-lane leader

        Args:
            world: World snapshot
            start: Subject state the fallback starts from; defaults to the current state
            prediction: Leader prediction used to place the leader at time t
            t: Time of the fallback start; defaults to the world clock

        Returns:
            Acceleration that keeps the speed non-negative over one update period
        """
        subject = world.subject
        t = world.clock if t is None else t
        if start is None:
            start = BoundaryState(x=subject.x, vx=subject.v, ax=subject.a, y=self.limits.lane_center(subject.lane))
        lane = self.limits.lane_of(start.y)
        member = subject.membership.role in (PlatoonRole.FOLLOWER, PlatoonRole.LEADER)
        params = self.idm.with_target(self.limits.v_max(lane), self.limits.t_g if member else self.limits.t_p)
        v = max(start.vx, 0.0)
        dt = self.settings.t_upd
        if prediction is not None:
            leader = prediction.leaders.get(lane)
            gap = math.inf if leader is None else float(leader.rear(t)) - start.x
            dv = 0.0 if leader is None else v - leader.v
        else:
            actual = world.leader_of(subject.id, lane)
            gap = math.inf if actual is None else actual.rear - start.x
            dv = 0.0 if actual is None else v - actual.v
        if gap <= 0:
            return -v / dt
        return idm_accel(v, gap, dv, params, dt=dt, platoon_follower=member)

    def fallback_segment(self, world: WorldState, start: BoundaryState, t: float,
                         prediction: Optional[LeaderPrediction] = None) -> QuinticSegment:
        """Constant-acceleration IDM segment over one update period, no lateral motion"""
        accel = self.idm_fallback(world, start, prediction, t)
        dt = self.settings.t_upd
        return QuinticSegment(
            coeffs_x=(start.x, max(start.vx, 0.0), 0.5 * accel, 0.0, 0.0, 0.0),
            coeffs_y=(start.y, 0.0, 0.0, 0.0, 0.0, 0.0),
            t_start=t,
            duration=dt,
            sub_action=SubAction.WAIT,
            fallback=True,
        )

    def bootstrap(self, world: WorldState) -> Trajectory:
        """Committed plan for the very first period: an IDM segment"""
        subject = world.subject
        start = BoundaryState(x=subject.x, vx=subject.v, ax=0.0, y=self.limits.lane_center(subject.lane))
        return Trajectory([self.fallback_segment(world, start, world.clock)])

    def replan_cycle(
        self,
        world: WorldState,
        committed: Trajectory,
        allowed: Optional[PlanFilter] = None,
        commitment: Optional[MergeCommitment] = None,
    ) -> ReplanOutcome:
        """
        One computation-delay cycle

        While the subject executes the committed plan over [t, t + t_upd], the
        planner prepares the plan that takes over at t + t_upd, starting from
        the committed state at that instant.

        Args:
            world: World at clock t
            committed: Trajectory covering at least [t, t + t_upd]
            allowed: Optional plan mask
            commitment: Merge already under way

        Returns:
            ReplanOutcome with the new committed trajectory
        """
        started = time.perf_counter()
        t = world.clock
        t_next = t + self.settings.t_upd
        if committed.t_end < t_next - 1e-9:
            raise ValueError(f"Committed trajectory ends at {committed.t_end}, before {t_next}")
        start = committed.eval(t_next).boundary()
        prediction = predict_leaders(
            world, self.settings.t_upd + self.limits.horizon, self.settings.sample_dt, self.settings.t_upd
        )
        mode = subject_mode(world)
        result = self.select_plan(world, mode, start, prediction, t_next, allowed, commitment)
        head = [s for s in committed.truncated(t_next).segments if s.t_end > t + 1e-9]
        subject = world.subject
        if result.feasible:
            new_plan = Trajectory(head + result.trajectory.segments)
            world.log(
                "plan", [subject.id], subject.x,
                f"target={result.target.value} seq={result.plan.describe()} "
                f"cost={result.objective:.6f} feasible=1 fallback=0",
            )
            fallback = False
        else:
            segment = self.fallback_segment(world, start, t_next, prediction)
            new_plan = Trajectory(head + [segment])
            world.log("plan", [subject.id], subject.x, f"mode={mode.value} feasible=0 fallback=1")
            fallback = True
        return ReplanOutcome(
            committed=new_plan,
            result=result,
            fallback=fallback,
            wall_time=time.perf_counter() - started,
        )
