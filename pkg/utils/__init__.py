"""
Utils package for the highway platoon simulator
"""

from .rng import ScenarioRandom
from .storage import RunStore

__all__ = ['ScenarioRandom', 'RunStore']
