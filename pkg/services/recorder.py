"""
Trace Recorder
Per-epoch kinematics and membership of the tracked vehicles
"""

import logging
from typing import Dict, List, Optional, Sequence

import pandas as pd

from core.energy import CostParams, beta_for
from core.maneuver import SubAction
from core.world import WorldState

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["t", "id", "group", "x", "v", "a", "lane", "y", "membership", "sub_action", "beta"]


class TraceRecorder:
    """
    Records the subject and its sampled neighbors every epoch

    Time is measured from the subject's insertion. A vehicle's trace stops
    when it leaves the network.
    """

    def __init__(self, params: CostParams, groups: Dict[str, Sequence[int]], t0: float):
        """
        Initialize the recorder

        Args:
            params: Cost parameters used to attach fuel coefficients
            groups: Group name (subject, follower, upstream, downstream) to vehicle ids
            t0: Clock value at the subject's insertion
        """
        self.params = params
        self.t0 = t0
        self.groups = {name: list(ids) for name, ids in groups.items()}
        self._group_of: Dict[int, str] = {}
        for name, ids in self.groups.items():
            for vehicle_id in ids:
                self._group_of.setdefault(vehicle_id, name)
        self._rows: List[tuple] = []

    def record(self, world: WorldState, subject_action: Optional[SubAction] = None):
        """Append one sample per tracked vehicle still on the road"""
        t = round(world.clock - self.t0, 6)
        for vehicle_id, group in self._group_of.items():
            vehicle = world.get(vehicle_id)
            if vehicle is None:
                continue
            label = vehicle.membership.label()
            action = subject_action if vehicle.is_subject else None
            self._rows.append((
                t, vehicle_id, group, vehicle.x, vehicle.v, vehicle.a, vehicle.lane.value,
                vehicle.lateral, label, action.value if action else "",
                beta_for(self.params, action, label),
            ))

    def frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self._rows, columns=TRACE_COLUMNS)
        return frame.sort_values(["t", "id"], kind="stable").reset_index(drop=True)

    def trace(self, vehicle_id: int, frame: Optional[pd.DataFrame] = None) -> pd.DataFrame:
        frame = self.frame() if frame is None else frame
        return frame[frame["id"] == vehicle_id].reset_index(drop=True)

    def traces(self, group: str, frame: Optional[pd.DataFrame] = None) -> List[pd.DataFrame]:
        """Traces of a group, in the order the group was sampled"""
        frame = self.frame() if frame is None else frame
        by_id = {vehicle_id: part.reset_index(drop=True) for vehicle_id, part in frame.groupby("id")}
        return [by_id[vehicle_id] for vehicle_id in self.groups.get(group, []) if vehicle_id in by_id]
