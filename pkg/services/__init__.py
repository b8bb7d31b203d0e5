"""
Services package: traffic simulation, subject control, costs and experiments

Only modules free of utils.config are re-exported here; import the scenario
and experiment modules directly.
"""

from .controllers import ControllerKind
from .costs import t_test_two_tailed, vehicle_trip_cost
from .traffic import TrafficSimulator, TrafficStateKind

__all__ = ['ControllerKind', 't_test_two_tailed', 'vehicle_trip_cost', 'TrafficSimulator', 'TrafficStateKind']
