"""
Controller Variants
The seven subject controllers and the plan masks each one imposes
"""

from enum import Enum
from typing import Optional

from core.maneuver import ManeuverPlan, SubAction
from core.world import PlatoonMembership


class ControllerKind(str, Enum):
    """Subject controller compared in the experiments"""
    CF = "CF"
    OC = "OC"
    OC_M0 = "OC_M0"
    OC_M6 = "OC_M6"
    OC_L = "OC_L"
    OC_LM0 = "OC_LM0"
    OC_LM6 = "OC_LM6"

    @property
    def optimal(self) -> bool:
        return self is not ControllerKind.CF

    @property
    def platoon_enabled(self) -> bool:
        return self.value.endswith(("M0", "M6"))

    @property
    def lane_change_enabled(self) -> bool:
        return self.value.startswith("OC_L")

    @property
    def min_platoon_keep_km(self) -> Optional[float]:
        if self.value.endswith("M6"):
            return 6.0
        if self.value.endswith("M0"):
            return 0.0
        return None


def enforce_min_keep(
    controller: ControllerKind,
    membership: PlatoonMembership,
    distance_in_platoon_km: float,
) -> bool:
    """
    Whether the subject may split from its platoon

    Args:
        controller: Subject controller
        membership: Subject's platoon membership
        distance_in_platoon_km: Distance travelled since joining, in km

    Returns:
        True when splitting is permitted
    """
    keep = controller.min_platoon_keep_km
    if keep is None or not membership.is_member:
        return True
    return distance_in_platoon_km >= keep - 1e-9


def plan_allowed(
    controller: ControllerKind,
    plan: ManeuverPlan,
    membership: PlatoonMembership,
    distance_in_platoon_km: float,
) -> bool:
    """Apply a controller's masks to one candidate plan"""
    if not controller.lane_change_enabled and plan.target.lane is not plan.mode.lane:
        return False
    if not controller.platoon_enabled and (plan.target.in_platoon or plan.contains(SubAction.MERGE)):
        return False
    if plan.contains(SubAction.SPLIT) and not plan.mode.passive:
        return enforce_min_keep(controller, membership, distance_in_platoon_km)
    return True
