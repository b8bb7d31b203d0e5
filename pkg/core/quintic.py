"""
Quintic Trajectory
Solving, evaluating and constraint-checking quintic polynomial motion segments
"""

import bisect
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial as P

from core.maneuver import SubAction
from core.road import Lane

SAMPLE_FIELDS = ("x", "y", "vx", "vy", "ax", "ay", "jx", "jy")
BOUNDARY_FIELDS = ("x", "vx", "ax", "y", "vy", "ay")


@dataclass(frozen=True)
class BoundaryState:
    """Position, velocity and acceleration on both axes at a segment end"""
    x: float
    vx: float = 0.0
    ax: float = 0.0
    y: float = 0.0
    vy: float = 0.0
    ay: float = 0.0


@dataclass(frozen=True)
class KinematicSample:
    t: float
    x: float
    y: float
    vx: float
    vy: float
    ax: float
    ay: float
    jx: float
    jy: float

    def boundary(self) -> BoundaryState:
        return BoundaryState(self.x, self.vx, self.ax, self.y, self.vy, self.ay)


@dataclass(frozen=True)
class PlanLimits:
    """Speed, acceleration, jerk and spacing bounds for the subject's plans"""
    v_max_left: float = 30.0
    v_max_right: float = 20.0
    a_max: float = 2.0
    j_max: float = 3.5
    t_p: float = 3.5
    t_g: float = 0.55
    horizon: float = 10.0
    lane_width: float = 3.6
    vehicle_length: float = 5.0
    tolerance: float = 1e-6

    def __post_init__(self):
        for name in ("v_max_left", "v_max_right", "a_max", "j_max", "t_p", "t_g", "horizon", "lane_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"Plan limit {name} must be positive, got {getattr(self, name)}")

    def v_max(self, lane: Lane) -> float:
        return self.v_max_left if lane is Lane.LEFT else self.v_max_right

    def lane_center(self, lane: Lane) -> float:
        return self.lane_width if lane is Lane.LEFT else 0.0

    def lane_of(self, y: float) -> Lane:
        return Lane.LEFT if y >= self.lane_width / 2.0 else Lane.RIGHT


def quintic_coefficients(
    p0: float, v0: float, a0: float,
    p1: float, v1: float, a1: float,
    duration: float,
) -> np.ndarray:
    """
    Closed-form coefficients c0..c5 of the quintic matching both ends

    Boundary values may be arrays; they are broadcast against each other and
    the coefficients are stacked along the last axis.

    Args:
        p0, v0, a0: Start position, velocity, acceleration
        p1, v1, a1: End position, velocity, acceleration
        duration: Segment length in local time

    Returns:
        Ascending coefficient array, shape (..., 6)
    """
    T = duration
    p0, v0, a0, p1, v1, a1 = np.broadcast_arrays(
        *(np.asarray(value, dtype=float) for value in (p0, v0, a0, p1, v1, a1))
    )
    h = p1 - p0 - v0 * T - 0.5 * a0 * T ** 2
    dv = v1 - v0 - a0 * T
    da = a1 - a0
    c3 = (10.0 * h - 4.0 * dv * T + 0.5 * da * T ** 2) / T ** 3
    c4 = (-15.0 * h + 7.0 * dv * T - da * T ** 2) / T ** 4
    c5 = (6.0 * h - 3.0 * dv * T + 0.5 * da * T ** 2) / T ** 5
    return np.stack([p0, v0, 0.5 * a0, c3, c4, c5], axis=-1)


def _polynomial_values(cx: np.ndarray, cy: np.ndarray, tau: np.ndarray,
                       fields: Sequence[str] = SAMPLE_FIELDS) -> Dict[str, np.ndarray]:
    # coefficients ascend along axis 0; extra axes come first in the result
    values = {}
    for axis, coeffs in (("x", cx), ("y", cy)):
        for order, name in enumerate((axis, f"v{axis}", f"a{axis}", f"j{axis}")):
            if name in fields:
                values[name] = P.polyval(tau, P.polyder(coeffs, order) if order else coeffs)
    return values


def sample_grid(t_start: float, t_end: float, dt: float) -> np.ndarray:
    """Uniform times from t_start with step dt, always including t_end"""
    span = t_end - t_start
    count = int(np.floor(span / dt + 1e-9))
    times = t_start + dt * np.arange(count + 1)
    if span - count * dt > 1e-9:
        times = np.append(times, t_end)
    return times


@dataclass(frozen=True)
class QuinticSegment:
    """
    Polynomial motion for one sub-action, in local time tau = t - t_start

    time_gap is the time headway enforced against the predicted leader
    while this segment runs (None means the free-agent gap t_p); beta is the
    fuel coefficient the planner charged for it.
    """
    coeffs_x: Tuple[float, ...]
    coeffs_y: Tuple[float, ...]
    t_start: float
    duration: float
    sub_action: SubAction = SubAction.WAIT
    time_gap: Optional[float] = None
    beta: Optional[float] = None
    fallback: bool = False

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def _local(self, t: float) -> float:
        tol = 1e-9 * max(1.0, abs(self.t_end))
        if t < self.t_start - tol or t > self.t_end + tol:
            raise ValueError(f"t={t} is outside the segment window [{self.t_start}, {self.t_end}]")
        return min(max(t - self.t_start, 0.0), self.duration)

    def eval(self, t: float) -> KinematicSample:
        """Position and first three derivatives at absolute time t"""
        tau = self._local(t)
        values = self._evaluate(np.array([tau]))
        return KinematicSample(t=t, **{name: float(values[name][0]) for name in SAMPLE_FIELDS})

    def _evaluate(self, tau: np.ndarray) -> Dict[str, np.ndarray]:
        return _polynomial_values(np.asarray(self.coeffs_x), np.asarray(self.coeffs_y), tau)

    def sample(self, times: np.ndarray) -> Dict[str, np.ndarray]:
        """Vectorized evaluation at absolute times inside the window"""
        tau = np.clip(np.asarray(times, dtype=float) - self.t_start, 0.0, self.duration)
        return self._evaluate(tau)

    def start_state(self) -> BoundaryState:
        return self.eval(self.t_start).boundary()

    def end_state(self) -> BoundaryState:
        return self.eval(self.t_end).boundary()

    def truncated(self, t_end: float) -> "QuinticSegment":
        """Same polynomial over a shorter window"""
        return replace(self, duration=max(t_end - self.t_start, 0.0))


def solve_segment(
    start: BoundaryState,
    end: BoundaryState,
    duration: float,
    t_start: float = 0.0,
    sub_action: SubAction = SubAction.WAIT,
    time_gap: Optional[float] = None,
    beta: Optional[float] = None,
) -> QuinticSegment:
    """
    Unique quintic segment joining two boundary states

    Args:
        start: State at t_start
        end: State at t_start + duration
        duration: Segment length in seconds (> 0)
        t_start: Absolute start time
        sub_action: Label of the sub-action this segment carries out
        time_gap: Spacing rule for the feasibility check
        beta: Fuel coefficient charged for the segment

    Returns:
        QuinticSegment
    """
    if not duration > 0:
        raise ValueError(f"Segment duration must be positive, got {duration}")
    cx = quintic_coefficients(start.x, start.vx, start.ax, end.x, end.vx, end.ax, duration)
    cy = quintic_coefficients(start.y, start.vy, start.ay, end.y, end.vy, end.ay, duration)
    return QuinticSegment(
        coeffs_x=tuple(float(c) for c in cx),
        coeffs_y=tuple(float(c) for c in cy),
        t_start=float(t_start),
        duration=float(duration),
        sub_action=sub_action,
        time_gap=time_gap,
        beta=beta,
    )


@dataclass(frozen=True, eq=False)
class SegmentBatch:
    """
    Quintic segments over one time window that share their start state

    Row i of coeffs_x / coeffs_y holds the ascending coefficients of segment
    i. Sampling returns arrays shaped (rows, times).
    """
    coeffs_x: np.ndarray
    coeffs_y: np.ndarray
    t_start: float
    duration: float
    sub_action: SubAction = SubAction.WAIT
    time_gap: Optional[float] = None
    beta: Optional[float] = None

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration

    def __len__(self) -> int:
        return int(self.coeffs_x.shape[0])

    def sample(self, times: np.ndarray, fields: Sequence[str] = SAMPLE_FIELDS) -> Dict[str, np.ndarray]:
        tau = np.clip(np.asarray(times, dtype=float) - self.t_start, 0.0, self.duration)
        return _polynomial_values(self.coeffs_x.T, self.coeffs_y.T, tau, fields)

    def end_states(self) -> Dict[str, np.ndarray]:
        """Boundary values of every row at the end of the window"""
        values = _polynomial_values(self.coeffs_x.T, self.coeffs_y.T, np.array([self.duration]), BOUNDARY_FIELDS)
        return {name: column[:, 0] for name, column in values.items()}

    def take(self, rows) -> "SegmentBatch":
        """Batch restricted to a row mask or index array"""
        return replace(self, coeffs_x=self.coeffs_x[rows], coeffs_y=self.coeffs_y[rows])

    def segment(self, row: int) -> QuinticSegment:
        return QuinticSegment(
            coeffs_x=tuple(float(c) for c in self.coeffs_x[row]),
            coeffs_y=tuple(float(c) for c in self.coeffs_y[row]),
            t_start=self.t_start,
            duration=self.duration,
            sub_action=self.sub_action,
            time_gap=self.time_gap,
            beta=self.beta,
        )


def solve_batch(
    start: BoundaryState,
    x_end,
    vx_end,
    y_end: float,
    duration: float,
    t_start: float = 0.0,
    sub_action: SubAction = SubAction.WAIT,
    time_gap: Optional[float] = None,
    beta: Optional[float] = None,
) -> SegmentBatch:
    """
    Quintic segments from one start state to several end states

    Every row ends with zero acceleration and at lateral rest on y_end, the
    same end conditions the planner passes to solve_segment.

    Args:
        start: Shared state at t_start
        x_end: End positions, one per row
        vx_end: End speeds, broadcast against x_end
        y_end: Lateral end position shared by all rows
        duration: Segment length in seconds (> 0)
        t_start: Absolute start time
        sub_action: Label of the sub-action the rows carry out
        time_gap: Spacing rule for the feasibility check
        beta: Fuel coefficient charged for the rows

    Returns:
        SegmentBatch
    """
    if not duration > 0:
        raise ValueError(f"Segment duration must be positive, got {duration}")
    x_end, vx_end = np.broadcast_arrays(np.atleast_1d(np.asarray(x_end, dtype=float)),
                                        np.asarray(vx_end, dtype=float))
    cx = quintic_coefficients(start.x, start.vx, start.ax, x_end, vx_end, 0.0, duration)
    cy = quintic_coefficients(start.y, start.vy, start.ay, y_end, 0.0, 0.0, duration)
    return SegmentBatch(
        coeffs_x=cx,
        coeffs_y=np.broadcast_to(cy, cx.shape),
        t_start=float(t_start),
        duration=float(duration),
        sub_action=sub_action,
        time_gap=time_gap,
        beta=beta,
    )


def lateral_within_limits(start: BoundaryState, y_end: float, duration: float, t_start: float,
                          limits: PlanLimits, dt: float = 0.1) -> bool:
    """
    Whether the lateral profile alone respects the acceleration and jerk bounds

    The lateral quintic depends only on the start state, y_end and the
    duration, so a failure here rules out every row of a batch.
    """
    cy = quintic_coefficients(start.y, start.vy, start.ay, y_end, 0.0, 0.0, duration)
    tau = np.clip(sample_grid(t_start, t_start + duration, dt) - t_start, 0.0, duration)
    tol = limits.tolerance
    if np.any(np.abs(P.polyval(tau, P.polyder(cy, 2))) > limits.a_max + tol):
        return False
    return not np.any(np.abs(P.polyval(tau, P.polyder(cy, 3))) > limits.j_max + tol)


class Trajectory:
    """Contiguous sequence of quintic segments"""

    def __init__(self, segments: Sequence[QuinticSegment]):
        if not segments:
            raise ValueError("A trajectory needs at least one segment")
        for previous, current in zip(segments, segments[1:]):
            if abs(current.t_start - previous.t_end) > 1e-9:
                raise ValueError(
                    f"Segments are not contiguous: {previous.t_end} then {current.t_start}"
                )
        self.segments: List[QuinticSegment] = list(segments)
        self._starts = [s.t_start for s in self.segments]

    @property
    def t_start(self) -> float:
        return self.segments[0].t_start

    @property
    def t_end(self) -> float:
        return self.segments[-1].t_end

    def __len__(self) -> int:
        return len(self.segments)

    def segment_at(self, t: float) -> QuinticSegment:
        """Segment active at t; a junction belongs to the later segment"""
        if t < self.t_start - 1e-9 or t > self.t_end + 1e-9:
            raise ValueError(f"t={t} is outside the trajectory window [{self.t_start}, {self.t_end}]")
        index = bisect.bisect_right(self._starts, t + 1e-12) - 1
        index = min(max(index, 0), len(self.segments) - 1)
        return self.segments[index]

    def eval(self, t: float) -> KinematicSample:
        return self.segment_at(t).eval(t)

    def sample_times(self, dt: float) -> np.ndarray:
        """Uniform grid over the trajectory, always including both ends"""
        return sample_grid(self.t_start, self.t_end, dt)

    def sample_at(self, times: np.ndarray) -> Dict[str, np.ndarray]:
        """Vectorized kinematics at absolute times; also returns the owning segment index"""
        times = np.asarray(times, dtype=float)
        owner = np.searchsorted(np.array(self._starts), times + 1e-12, side="right") - 1
        owner = np.clip(owner, 0, len(self.segments) - 1)
        result = {name: np.empty_like(times) for name in SAMPLE_FIELDS}
        for index, segment in enumerate(self.segments):
            mask = owner == index
            if not np.any(mask):
                continue
            values = segment.sample(times[mask])
            for name in SAMPLE_FIELDS:
                result[name][mask] = values[name]
        result["t"] = times
        result["segment"] = owner
        return result

    def truncated(self, t_end: float) -> "Trajectory":
        """Portion of the trajectory up to t_end"""
        kept = []
        for segment in self.segments:
            if segment.t_start >= t_end - 1e-12:
                break
            kept.append(segment.truncated(t_end) if segment.t_end > t_end else segment)
        return Trajectory(kept)

    def then(self, other: "Trajectory") -> "Trajectory":
        return Trajectory(self.segments + other.segments)

    def junction_mismatch(self) -> float:
        """Largest position/velocity/acceleration jump at any segment junction"""
        worst = 0.0
        for previous, current in zip(self.segments, self.segments[1:]):
            a = previous.end_state()
            b = current.start_state()
            for name in ("x", "vx", "ax", "y", "vy", "ay"):
                worst = max(worst, abs(getattr(a, name) - getattr(b, name)))
        return worst

    def distance(self) -> float:
        return self.segments[-1].end_state().x - self.segments[0].start_state().x

    def to_frame(self, dt: float = 0.1) -> pd.DataFrame:
        """Sampled trajectory (t, x, y, vx, vy, ax, ay) for plotting"""
        values = self.sample_at(self.sample_times(dt))
        return pd.DataFrame({name: values[name] for name in ("t", "x", "y", "vx", "vy", "ax", "ay")})


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a constraint check; violation is None when feasible"""
    feasible: bool
    violation: Optional[str] = None
    time: Optional[float] = None
    value: Optional[float] = None

    def __bool__(self) -> bool:
        return self.feasible


VIOLATION_ORDER = ("speed", "gap", "rear_gap", "acceleration", "jerk")


def _constraint_checks(times: np.ndarray, s: Dict[str, np.ndarray], gap_values, limits: PlanLimits,
                       leaders=None) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    # sample arrays share a trailing time axis; leading axes are batch rows
    tol = limits.tolerance
    width = limits.lane_width
    x, y, vx = s["x"], s["y"], s["vx"]

    in_left = y >= width / 2.0
    between = (y > tol) & (y < width - tol)
    v_cap = np.where(in_left, limits.v_max_left, limits.v_max_right)
    checks: Dict[str, Tuple[np.ndarray, np.ndarray]] = {
        "speed": ((vx < -tol) | (vx > v_cap + tol), vx),
    }

    if leaders is not None:
        gap_bad = np.zeros(x.shape, dtype=bool)
        gap_seen = np.full(x.shape, np.inf)
        for lane, leader in leaders.leaders.items():
            if leader is None:
                continue
            occupied = between | (in_left if lane is Lane.LEFT else ~in_left)
            gap = leader.rear(times) - x
            bad = occupied & ((gap < gap_values * vx - tol) | (gap <= 0.0))
            gap_bad |= bad
            gap_seen = np.where(bad, np.minimum(gap_seen, gap), gap_seen)
        checks["gap"] = (gap_bad, gap_seen)

        rear_bad = np.zeros(x.shape, dtype=bool)
        rear_seen = np.full(x.shape, np.inf)
        for lane, follower in leaders.followers.items():
            if follower is None:
                continue
            gap = x - limits.vehicle_length - follower.position(times)
            bad = between & ((gap < limits.t_p * follower.v - tol) | (gap <= 0.0))
            rear_bad |= bad
            rear_seen = np.where(bad, np.minimum(rear_seen, gap), rear_seen)
        checks["rear_gap"] = (rear_bad, rear_seen)

    accel = np.maximum(np.abs(s["ax"]), np.abs(s["ay"]))
    jerk = np.maximum(np.abs(s["jx"]), np.abs(s["jy"]))
    checks["acceleration"] = (accel > limits.a_max + tol, accel)
    checks["jerk"] = (jerk > limits.j_max + tol, jerk)
    return checks


def check_feasibility(trajectory: Trajectory, limits: PlanLimits, leaders=None, dt: float = 0.1) -> FeasibilityReport:
    """
    Sample a trajectory and report the first constraint violation

    Checks 0 <= vx <= v_max of the occupied lane, the spacing rule against each
    predicted leader of an occupied lane, the rear gap to the entered lane's
    follower while between lane centers, and |a|, |j| bounds on both axes.

    Every bound is applied with limits.tolerance. For spacing that means a
    gap is accepted down to time_gap * vx - tolerance, so a gap exactly equal
    to the required headway passes; a non-positive gap never does.

    Args:
        trajectory: Candidate trajectory
        limits: Plan limits
        leaders: LeaderPrediction or None
        dt: Sampling step (> 0)

    Returns:
        FeasibilityReport
    """
    if dt <= 0:
        raise ValueError(f"Sampling step must be positive, got {dt}")
    times = trajectory.sample_times(dt)
    s = trajectory.sample_at(times)
    gap_values = np.array([segment.time_gap if segment.time_gap is not None else limits.t_p
                           for segment in trajectory.segments])[s["segment"]]
    checks = _constraint_checks(times, s, gap_values, limits, leaders)

    first: Optional[Tuple[int, int, str, float]] = None
    for priority, name in enumerate(VIOLATION_ORDER):
        if name not in checks:
            continue
        bad, values = checks[name]
        hits = np.flatnonzero(bad)
        if hits.size == 0:
            continue
        candidate = (int(hits[0]), priority, name, float(values[hits[0]]))
        if first is None or candidate[:2] < first[:2]:
            first = candidate
    if first is None:
        return FeasibilityReport(feasible=True)
    index, _, name, value = first
    return FeasibilityReport(feasible=False, violation=name, time=float(times[index]), value=value)


def batch_feasibility(batch: SegmentBatch, limits: PlanLimits, leaders=None, dt: float = 0.1) -> np.ndarray:
    """
    Rows of a batch that pass every check of check_feasibility

    Args:
        batch: Candidate segments
        limits: Plan limits
        leaders: LeaderPrediction or None
        dt: Sampling step (> 0)

    Returns:
        Boolean mask, one entry per row
    """
    if dt <= 0:
        raise ValueError(f"Sampling step must be positive, got {dt}")
    times = sample_grid(batch.t_start, batch.t_end, dt)
    s = batch.sample(times)
    gap_value = batch.time_gap if batch.time_gap is not None else limits.t_p
    ok = np.ones(len(batch), dtype=bool)
    for bad, _ in _constraint_checks(times, s, gap_value, limits, leaders).values():
        ok &= ~bad.any(axis=-1)
    return ok
