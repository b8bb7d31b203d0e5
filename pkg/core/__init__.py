"""
Core package: road, vehicles, car following, trajectories, maneuvers and planning
"""

from .energy import CostBreakdown, CostParams, integrate_cost
from .idm import IdmParams, idm_accel
from .maneuver import ManeuverError, ManeuverPlan, SubAction, SubjectMode, TargetState
from .planner import PlannerSettings, TrajectoryPlanner
from .quintic import PlanLimits, QuinticSegment, Trajectory, solve_segment
from .road import Lane, RoadNetwork, build_reference_network, load_network
from .world import SimulationIntegrityError, VehicleState, WorldState

__all__ = [
    'CostBreakdown', 'CostParams', 'integrate_cost',
    'IdmParams', 'idm_accel',
    'ManeuverError', 'ManeuverPlan', 'SubAction', 'SubjectMode', 'TargetState',
    'PlannerSettings', 'TrajectoryPlanner',
    'PlanLimits', 'QuinticSegment', 'Trajectory', 'solve_segment',
    'Lane', 'RoadNetwork', 'build_reference_network', 'load_network',
    'SimulationIntegrityError', 'VehicleState', 'WorldState',
]
