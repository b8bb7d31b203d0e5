import numpy as np
import pytest

from core.maneuver import SubAction
from core.quintic import (
    BoundaryState,
    PlanLimits,
    QuinticSegment,
    Trajectory,
    batch_feasibility,
    check_feasibility,
    solve_batch,
    solve_segment,
)
from core.road import Lane
from core.world import LeaderPrediction, PredictedVehicle


def constant_speed(v: float, duration: float, x0: float = 0.0, t0: float = 0.0) -> QuinticSegment:
    return solve_segment(BoundaryState(x0, v), BoundaryState(x0 + v * duration, v), duration, t0)


def test_min_jerk_coefficients():
    segment = solve_segment(BoundaryState(0.0), BoundaryState(1.0), 1.0)
    np.testing.assert_allclose(segment.coeffs_x, [0, 0, 0, 10, -15, 6], atol=1e-12)
    np.testing.assert_allclose(segment.coeffs_y, np.zeros(6), atol=1e-12)


def test_min_jerk_midpoint():
    sample = solve_segment(BoundaryState(0.0), BoundaryState(1.0), 1.0).eval(0.5)
    assert sample.x == pytest.approx(0.5)
    assert sample.vx == pytest.approx(1.875)


def test_zero_boundaries_give_zero_polynomial():
    segment = solve_segment(BoundaryState(0.0), BoundaryState(0.0), 3.0)
    assert not np.any(segment.coeffs_x)


def test_constant_speed_is_linear():
    segment = constant_speed(12.0, 4.0)
    np.testing.assert_allclose(segment.coeffs_x, [0, 12, 0, 0, 0, 0], atol=1e-12)


def test_endpoint_residuals_for_random_boundaries():
    rng = np.random.default_rng(2019)
    for _ in range(1000):
        start = BoundaryState(
            x=rng.uniform(-1e4, 1e4), vx=rng.uniform(0, 40), ax=rng.uniform(-4, 4),
            y=rng.uniform(-4, 4), vy=rng.uniform(-2, 2), ay=rng.uniform(-4, 4),
        )
        duration = rng.uniform(0.4, 20.0)
        end = BoundaryState(
            x=start.x + rng.uniform(0, 40) * duration, vx=rng.uniform(0, 40), ax=rng.uniform(-4, 4),
            y=rng.uniform(-4, 4), vy=rng.uniform(-2, 2), ay=rng.uniform(-4, 4),
        )
        t0 = rng.uniform(0, 100)
        segment = solve_segment(start, end, duration, t0)
        for expected, actual in ((start, segment.start_state()), (end, segment.end_state())):
            for name in ("x", "vx", "ax", "y", "vy", "ay"):
                assert getattr(actual, name) == pytest.approx(getattr(expected, name), rel=1e-12, abs=1e-9)


def test_derivatives_match_finite_differences():
    segment = solve_segment(BoundaryState(3.0, 10.0, 1.0, 0.0), BoundaryState(80.0, 14.0, -0.5, 3.6), 6.0, 2.0)
    h = 1e-3
    for t in np.linspace(2.1, 7.9, 25):
        before, here, after = segment.eval(t - h), segment.eval(t), segment.eval(t + h)
        assert (after.x - before.x) / (2 * h) == pytest.approx(here.vx, abs=1e-4)
        assert (after.vx - before.vx) / (2 * h) == pytest.approx(here.ax, abs=1e-4)
        assert (after.ax - before.ax) / (2 * h) == pytest.approx(here.jx, abs=1e-4)
        assert (after.y - before.y) / (2 * h) == pytest.approx(here.vy, abs=1e-4)


@pytest.mark.parametrize("duration", [0.0, -1.0])
def test_non_positive_duration(duration):
    with pytest.raises(ValueError):
        solve_segment(BoundaryState(0.0), BoundaryState(1.0), duration)


def test_eval_outside_window():
    with pytest.raises(ValueError, match="outside"):
        constant_speed(10.0, 2.0).eval(2.5)


def test_trajectory_junctions_are_continuous():
    first = solve_segment(BoundaryState(0.0, 10.0), BoundaryState(35.0, 14.0, 0.5), 3.0)
    second = solve_segment(first.end_state(), BoundaryState(100.0, 12.0, 0.0, 3.6), 5.0, first.t_end)
    trajectory = Trajectory([first, second])
    assert trajectory.junction_mismatch() < 1e-9
    assert trajectory.segment_at(3.0) is second
    assert trajectory.distance() == pytest.approx(100.0)


def test_trajectory_requires_contiguous_segments():
    with pytest.raises(ValueError, match="contiguous"):
        Trajectory([constant_speed(10.0, 2.0), constant_speed(10.0, 2.0, x0=20.0, t0=3.0)])


def test_truncated_trajectory():
    trajectory = Trajectory([constant_speed(10.0, 2.0), constant_speed(10.0, 3.0, x0=20.0, t0=2.0)])
    head = trajectory.truncated(2.5)
    assert len(head) == 2
    assert head.t_end == pytest.approx(2.5)
    assert head.eval(2.5).x == pytest.approx(25.0)


def test_constant_speed_at_lane_cap_is_feasible():
    report = check_feasibility(Trajectory([constant_speed(20.0, 10.0)]), PlanLimits())
    assert report.feasible


def test_acceleration_violation():
    segment = QuinticSegment(coeffs_x=(0.0, 5.0, 1.25, 0.0, 0.0, 0.0), coeffs_y=(0.0,) * 6, t_start=0.0, duration=2.0)
    report = check_feasibility(Trajectory([segment]), PlanLimits())
    assert not report.feasible
    assert report.violation == "acceleration"
    assert report.value == pytest.approx(2.5)


def test_speed_above_lane_cap():
    report = check_feasibility(Trajectory([constant_speed(22.0, 5.0)]), PlanLimits())
    assert report.violation == "speed"
    left = solve_segment(BoundaryState(0.0, 22.0, y=3.6), BoundaryState(110.0, 22.0, y=3.6), 5.0)
    assert check_feasibility(Trajectory([left]), PlanLimits()).feasible


def leader_prediction(lane: Lane, leader: PredictedVehicle) -> LeaderPrediction:
    return LeaderPrediction(
        t0=0.0, horizon=10.0, dt=0.1,
        leaders={Lane.LEFT: None, Lane.RIGHT: None, lane: leader},
        followers={Lane.LEFT: None, Lane.RIGHT: None},
    )


def test_time_gap_violation_against_stationary_leader():
    # rear bumper at 60 m, required gap 3.5 * 20 = 70 m
    prediction = leader_prediction(Lane.RIGHT, PredictedVehicle(id=1, x0=65.0, v=0.0, length=5.0, t0=0.0))
    report = check_feasibility(Trajectory([constant_speed(20.0, 1.0)]), PlanLimits(), prediction)
    assert report.violation == "gap"
    assert report.time == pytest.approx(0.0)
    assert report.value == pytest.approx(60.0)


def test_leader_in_other_lane_is_ignored():
    prediction = leader_prediction(Lane.LEFT, PredictedVehicle(id=1, x0=65.0, v=0.0, length=5.0, t0=0.0))
    assert check_feasibility(Trajectory([constant_speed(20.0, 1.0)]), PlanLimits(), prediction).feasible


def test_relaxing_limits_never_breaks_feasibility():
    segment = QuinticSegment(coeffs_x=(0.0, 5.0, 1.25, 0.0, 0.0, 0.0), coeffs_y=(0.0,) * 6, t_start=0.0, duration=2.0)
    trajectory = Trajectory([segment])
    assert not check_feasibility(trajectory, PlanLimits(a_max=2.0))
    assert check_feasibility(trajectory, PlanLimits(a_max=3.0))
    assert check_feasibility(trajectory, PlanLimits(a_max=3.0, j_max=10.0, v_max_right=25.0))


def test_sampling_step_must_be_positive():
    with pytest.raises(ValueError):
        check_feasibility(Trajectory([constant_speed(10.0, 1.0)]), PlanLimits(), dt=0.0)


def test_to_frame_covers_both_ends():
    frame = Trajectory([constant_speed(10.0, 1.05)]).to_frame(0.1)
    assert frame["t"].iloc[0] == 0.0
    assert frame["t"].iloc[-1] == pytest.approx(1.05)
    assert list(frame.columns) == ["t", "x", "y", "vx", "vy", "ax", "ay"]


def test_segment_labels_survive_solving():
    segment = solve_segment(BoundaryState(0.0, 10.0), BoundaryState(20.0, 10.0), 2.0,
                            sub_action=SubAction.MERGE, time_gap=0.55, beta=0.95)
    assert segment.sub_action is SubAction.MERGE
    assert segment.time_gap == 0.55
    assert segment.beta == 0.95


def test_gap_equal_to_headway_is_accepted():
    # leader rear stays exactly 3.5 * 20 = 70 m ahead
    at_headway = leader_prediction(Lane.RIGHT, PredictedVehicle(id=1, x0=75.0, v=20.0, length=5.0, t0=0.0))
    assert check_feasibility(Trajectory([constant_speed(20.0, 5.0)]), PlanLimits(), at_headway).feasible
    inside = leader_prediction(Lane.RIGHT, PredictedVehicle(id=1, x0=74.99, v=20.0, length=5.0, t0=0.0))
    report = check_feasibility(Trajectory([constant_speed(20.0, 5.0)]), PlanLimits(), inside)
    assert report.violation == "gap"
    assert report.value == pytest.approx(69.99)


def test_batch_feasibility_agrees_with_trajectory_check():
    prediction = leader_prediction(Lane.RIGHT, PredictedVehicle(id=1, x0=140.0, v=12.0, length=5.0, t0=0.0))
    x_end = np.array([150.0, 175.0, 200.0, 215.0, 260.0])
    v_end = np.array([10.0, 14.0, 18.0, 20.0, 24.0])
    batch = solve_batch(BoundaryState(0.0, 16.0), x_end, v_end, 0.0, 10.0, 0.0, SubAction.WAIT, 0.55)
    mask = batch_feasibility(batch, PlanLimits(), prediction)
    expected = [check_feasibility(Trajectory([batch.segment(row)]), PlanLimits(), prediction).feasible
                for row in range(len(batch))]
    assert mask.tolist() == expected
    assert any(expected) and not all(expected)
