"""
Intelligent Driver Model
Car-following law for surrounding vehicles and the subject's fallback
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class IdmParams:
    """IDM parameters; v0 and T are set per vehicle from lane and membership"""
    a: float = 2.0       # maximum desired acceleration
    b: float = 3.0       # comfortable deceleration
    v0: float = 20.0     # desired speed (lane cap)
    s0: float = 5.0      # standstill gap h_st
    T: float = 3.5       # desired time gap
    delta: float = 4.0

    def __post_init__(self):
        for name in ("a", "b", "v0", "s0", "T", "delta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IDM parameter {name} must be positive, got {getattr(self, name)}")

    def with_target(self, v0: float, T: float) -> "IdmParams":
        return replace(self, v0=v0, T=T)


def idm_accel(
    v: float,
    gap: float,
    dv: float,
    p: IdmParams,
    dt: Optional[float] = None,
    platoon_follower: bool = False,
) -> float:
    """
    IDM acceleration

    Free agents use a[1 - (v/v0)^delta - (s*/gap)^2]. Platoon followers take the
    smaller of the free-road and interaction terms, which makes a gap of
    s0 + v*T an equilibrium at any speed up to v0.

    Args:
        v: Own speed (m/s)
        gap: Bumper-to-bumper gap to the leader; math.inf when there is none
        dv: Closing speed v - v_leader
        p: IDM parameters
        dt: Integration step; when given the result keeps v + a*dt >= 0
        platoon_follower: Use the platoon-follower combination

    Returns:
        Acceleration in m/s^2
    """
    if gap <= 0:
        raise ValueError(f"IDM gap must be positive when a leader is present, got {gap}")
    free = (max(v, 0.0) / p.v0) ** p.delta
    if math.isinf(gap):
        interaction = 0.0
    else:
        s_star = p.s0 + max(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a * p.b)))
        interaction = (s_star / gap) ** 2
    if platoon_follower:
        accel = p.a * min(1.0 - free, 1.0 - interaction)
    else:
        accel = p.a * (1.0 - free - interaction)
    if dt is not None:
        accel = max(accel, -v / dt)
    return accel


def idm_accel_array(
    v: np.ndarray,
    gap: np.ndarray,
    dv: np.ndarray,
    v0: np.ndarray,
    T: np.ndarray,
    follower: np.ndarray,
    p: IdmParams,
    dt: Optional[float] = None,
) -> np.ndarray:
    """
    Vectorized IDM over one lane

    Args:
        v, gap, dv: Per-vehicle speed, gap (np.inf for no leader), closing speed
        v0, T: Per-vehicle desired speed and time gap
        follower: Boolean mask of platoon followers
        p: Shared IDM parameters (a, b, s0, delta)
        dt: Integration step for the v >= 0 clamp

    Returns:
        Accelerations
    """
    v = np.asarray(v, dtype=float)
    if np.any(gap <= 0):
        raise ValueError("IDM gap must be positive when a leader is present")
    free = (np.maximum(v, 0.0) / v0) ** p.delta
    s_star = p.s0 + np.maximum(0.0, v * T + v * dv / (2.0 * math.sqrt(p.a * p.b)))
    with np.errstate(divide="ignore", invalid="ignore"):
        interaction = np.where(np.isinf(gap), 0.0, (s_star / gap) ** 2)
    accel = np.where(
        follower,
        p.a * np.minimum(1.0 - free, 1.0 - interaction),
        p.a * (1.0 - free - interaction),
    )
    if dt is not None:
        accel = np.maximum(accel, -v / dt)
    return accel
