"""
Energy and Cost Model
Resistance-force fuel model, platoon fuel coefficients and cost records
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from core.maneuver import SubAction

TEN_KM = 10000.0


@dataclass(frozen=True)
class CostParams:
    """Fuel price per joule, value of time per second, resistance and platoon coefficients"""
    eta_f: float = 5.98e-8
    eta_t: float = 0.0
    gamma_ar: float = 0.3987
    gamma_rr: float = 281.547
    gamma_gr: float = 0.0
    gamma_ir: float = 1750.0
    beta_free: float = 1.0
    beta_platoon: float = 0.9
    beta_transition: float = 0.95

    def __post_init__(self):
        for name in ("beta_free", "beta_platoon", "beta_transition"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {value}")
        for name in ("eta_f", "eta_t", "gamma_ar", "gamma_rr", "gamma_gr", "gamma_ir"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")

    @classmethod
    def from_value_of_time(cls, vot_per_hour: float, **overrides) -> "CostParams":
        return cls(eta_t=vot_per_hour / 3600.0, **overrides)


@dataclass(frozen=True)
class CostBreakdown:
    """Fuel energy, fuel dollars, time dollars and distance of one trip or segment"""
    energy: float
    fuel_dollars: float
    time_dollars: float
    distance: float

    @property
    def total_dollars(self) -> float:
        return self.fuel_dollars + self.time_dollars

    @property
    def per_10km_dollars(self) -> Optional[float]:
        if self.distance <= 0:
            return None
        return self.total_dollars * (TEN_KM / self.distance)

    @property
    def fuel_per_10km(self) -> Optional[float]:
        if self.distance <= 0:
            return None
        return self.fuel_dollars * (TEN_KM / self.distance)

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(
            energy=self.energy + other.energy,
            fuel_dollars=self.fuel_dollars + other.fuel_dollars,
            time_dollars=self.time_dollars + other.time_dollars,
            distance=self.distance + other.distance,
        )

    def normalized(self) -> "CostBreakdown":
        """Same trip scaled to 10 km"""
        if self.distance <= 0:
            raise ValueError("Cannot normalize a trip with zero distance")
        factor = TEN_KM / self.distance
        return CostBreakdown(
            energy=self.energy * factor,
            fuel_dollars=self.fuel_dollars * factor,
            time_dollars=self.time_dollars * factor,
            distance=TEN_KM,
        )

    @classmethod
    def zero(cls) -> "CostBreakdown":
        return cls(0.0, 0.0, 0.0, 0.0)


def tractive_power(v, a, params: CostParams):
    """Power in watts: (aero + rolling + grade + inertia on positive accel) * v"""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    force = params.gamma_ar * v ** 2 + params.gamma_rr + params.gamma_gr + params.gamma_ir * np.maximum(a, 0.0)
    return force * v


def integrate_energy(times, v, a, beta, params: CostParams):
    """
    Beta-weighted tractive energy in joules, integrated over the last axis

    v and a may carry leading batch axes; the result drops the time axis.
    """
    return trapezoid(beta * tractive_power(v, a, params), np.asarray(times, dtype=float), axis=-1)


def integrate_cost(times, v, a, beta, params: CostParams) -> CostBreakdown:
    """
    Trapezoidal integration of the fuel model over sampled kinematics

    Args:
        times: Sample times (s)
        v: Longitudinal speed samples (m/s)
        a: Longitudinal acceleration samples (m/s^2)
        beta: Fuel coefficient per sample (scalar or array)
        params: Cost parameters

    Returns:
        CostBreakdown with beta-weighted energy
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("Cannot integrate an empty trace")
    if times.size == 1:
        return CostBreakdown.zero()
    beta = np.broadcast_to(np.asarray(beta, dtype=float), times.shape)
    energy = float(integrate_energy(times, v, a, beta, params))
    distance = float(trapezoid(np.asarray(v, dtype=float), times))
    duration = float(times[-1] - times[0])
    return CostBreakdown(
        energy=energy,
        fuel_dollars=params.eta_f * energy,
        time_dollars=params.eta_t * duration,
        distance=distance,
    )


def beta_for(params: CostParams, sub_action: Optional[SubAction], membership: str) -> float:
    """
    Fuel coefficient for a sub-action under a membership status

    Args:
        params: Cost parameters
        sub_action: Sub-action being executed, None outside planned motion
        membership: PlatoonMembership label (free, leader, follower, joining, dissolving)

    Returns:
        beta
    """
    if sub_action in (SubAction.MERGE, SubAction.SPLIT):
        return params.beta_transition
    if sub_action is SubAction.LANE_CHANGE:
        return params.beta_free
    if membership in ("joining", "dissolving"):
        return params.beta_transition
    if membership in ("leader", "follower"):
        return params.beta_platoon
    return params.beta_free
