"""
Simulation Configuration
Parameter model, environment settings and KEY = VALUE configuration files
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator

from core.energy import CostParams
from core.idm import IdmParams
from core.planner import PlannerSettings
from core.quintic import PlanLimits
from core.road import RoadNetwork, build_reference_network, load_network, parse_network
from services.controllers import ControllerKind
from services.traffic import BehaviorParams

logger = logging.getLogger(__name__)


class SimulationParameters(BaseModel):
    """Every tunable simulation parameter, defaulting to the evaluation setup"""

    model_config = {"frozen": True, "extra": "forbid"}

    # subject planning
    t_upd: float = Field(0.4, gt=0)
    horizon: float = Field(10.0, gt=0)
    a_max: float = Field(2.0, gt=0)
    j_max: float = Field(3.5, gt=0)
    speed_step: float = Field(2.0, gt=0)
    duration_step: float = Field(1.0, gt=0)
    sample_dt: float = Field(0.1, gt=0)
    quadrature_dt: float = Field(0.01, gt=0)
    min_progress_ratio: float = Field(0.9, ge=0, le=1)
    merge_gap_step: float = Field(5.0, gt=0)
    merge_closing_rate: float = Field(1.0, gt=0)

    # surrounding behavior
    p_on: float = Field(0.6, ge=0, le=1)
    p_off: float = Field(0.6, ge=0, le=1)
    p_npe: float = Field(0.5, ge=0, le=1)
    p_merge: float = Field(0.6, ge=0, le=1)
    p_change: float = Field(0.1, ge=0, le=1)
    t_p: float = Field(3.5, gt=0)
    t_g: float = Field(0.55, gt=0)
    t_lcp: float = Field(3.6, gt=0)
    t_lc: float = Field(5.0, gt=0)
    tau_s: float = Field(0.4, gt=0)
    d_cg: float = Field(50.0, gt=0)
    comm_range: float = Field(300.0, gt=0)
    schedule_levels: Tuple[int, ...] = (2, 10, 50)
    schedule_mean_left: float = 2.0
    schedule_mean_right: float = -1.0
    schedule_sigma: float = Field(5.0, gt=0)

    # road and vehicles
    v_m_left: float = Field(20.0, gt=0)
    v_m_right: float = Field(14.0, gt=0)
    v_max_left: float = Field(30.0, gt=0)
    v_max_right: float = Field(20.0, gt=0)
    lane_width: float = Field(3.6, gt=0)
    vehicle_length: float = Field(5.0, gt=0)

    # car following
    idm_a: float = Field(2.0, gt=0)
    idm_b: float = Field(3.0, gt=0)
    s0: float = Field(5.0, gt=0)
    idm_delta: float = Field(4.0, gt=0)

    # fuel model
    gamma_ar: float = Field(0.3987, ge=0)
    gamma_rr: float = Field(281.547, ge=0)
    gamma_gr: float = Field(0.0, ge=0)
    gamma_ir: float = Field(1750.0, ge=0)
    eta_f: float = Field(5.98e-8, ge=0)
    beta_free: float = Field(1.0, gt=0, le=1)
    beta_platoon: float = Field(0.9, gt=0, le=1)
    beta_transition: float = Field(0.95, gt=0, le=1)

    # scenario
    approach_length: float = Field(4000.0, ge=0)
    warmup_time: float = Field(120.0, ge=0)
    warmup_sigma: float = Field(2.0, ge=0)
    insertion_wait: float = Field(60.0, ge=0)
    max_trip_time: float = Field(7200.0, gt=0)
    sample_per_lane: int = Field(15, ge=1)
    first_window: float = Field(500.0, gt=0)

    @field_validator("schedule_levels", mode="before")
    @classmethod
    def _parse_levels(cls, value):
        if isinstance(value, str):
            value = [int(part) for part in value.replace(" ", "").split(",") if part]
        levels = tuple(int(v) for v in value)
        if not levels or list(levels) != sorted(set(levels)):
            raise ValueError(f"schedule_levels must be strictly ascending, got {levels}")
        return levels

    # ---- views ------------------------------------------------------------

    def idm(self) -> IdmParams:
        return IdmParams(a=self.idm_a, b=self.idm_b, s0=self.s0, delta=self.idm_delta, T=self.t_p, v0=self.v_max_right)

    def behavior(self) -> BehaviorParams:
        return BehaviorParams(
            p_on=self.p_on, p_off=self.p_off, p_npe=self.p_npe, p_merge=self.p_merge, p_change=self.p_change,
            t_p=self.t_p, t_g=self.t_g, t_lc=self.t_lc, t_lcp=self.t_lcp, d_cg=self.d_cg, tau_s=self.tau_s,
            comm_range=self.comm_range,
            schedule_mean_left=self.schedule_mean_left, schedule_mean_right=self.schedule_mean_right,
            schedule_sigma=self.schedule_sigma, schedule_levels=self.schedule_levels,
            vehicle_length=self.vehicle_length, lane_width=self.lane_width,
            warmup_time=self.warmup_time, warmup_sigma=self.warmup_sigma, insertion_wait=self.insertion_wait,
            approach_length=self.approach_length, idm=self.idm(),
        )

    def limits(self) -> PlanLimits:
        return PlanLimits(
            v_max_left=self.v_max_left, v_max_right=self.v_max_right, a_max=self.a_max, j_max=self.j_max,
            t_p=self.t_p, t_g=self.t_g, horizon=self.horizon, lane_width=self.lane_width,
            vehicle_length=self.vehicle_length,
        )

    def cost_params(self, vot_per_hour: float = 0.0) -> CostParams:
        return CostParams.from_value_of_time(
            vot_per_hour,
            eta_f=self.eta_f, gamma_ar=self.gamma_ar, gamma_rr=self.gamma_rr,
            gamma_gr=self.gamma_gr, gamma_ir=self.gamma_ir, beta_free=self.beta_free,
            beta_platoon=self.beta_platoon, beta_transition=self.beta_transition,
        )

    def planner_settings(self) -> PlannerSettings:
        return PlannerSettings(
            speed_step=self.speed_step, duration_step=self.duration_step, sample_dt=self.sample_dt,
            quadrature_dt=self.quadrature_dt, t_upd=self.t_upd, min_progress_ratio=self.min_progress_ratio,
            comm_range=self.comm_range, merge_gap_step=self.merge_gap_step,
            merge_closing_rate=self.merge_closing_rate,
        )

    def speeds(self) -> Dict[str, float]:
        return {
            "v_max_left": self.v_max_left, "v_max_right": self.v_max_right,
            "v_m_left": self.v_m_left, "v_m_right": self.v_m_right,
        }

    def network(self, path: Optional[Union[str, Path]] = None) -> RoadNetwork:
        """Reference highway, or a layout file when one is given"""
        if path is None:
            return build_reference_network(**self.speeds())
        return load_network(path, **self.speeds())

    def network_from_lines(self, lines: List[str], source: str = "<request>") -> RoadNetwork:
        return parse_network(lines, source, **self.speeds())

    def with_overrides(self, overrides: Dict[str, Any]) -> "SimulationParameters":
        """Validated copy with some values replaced"""
        merged = self.model_dump()
        merged.update(overrides)
        return SimulationParameters.model_validate(merged)


class EnvSettings(BaseModel):
    """Process-level settings read from the environment"""
    output_dir: str = "results"
    log_level: str = "INFO"
    workers: int = Field(1, ge=1)
    base_seed: int = Field(2019, ge=0)
    api_host: str = "0.0.0.0"
    api_port: int = Field(8000, gt=0)


def load_env_settings() -> EnvSettings:
    """Read SIM_* variables (after loading a .env file, if present)"""
    load_dotenv()
    values = {
        "output_dir": os.getenv("SIM_OUTPUT_DIR"),
        "log_level": os.getenv("SIM_LOG_LEVEL"),
        "workers": os.getenv("SIM_WORKERS"),
        "base_seed": os.getenv("SIM_BASE_SEED"),
        "api_host": os.getenv("SIM_API_HOST"),
        "api_port": os.getenv("SIM_API_PORT"),
    }
    return EnvSettings(**{key: value for key, value in values.items() if value not in (None, "")})


def parse_key_values(lines: List[str], source: str = "<config>") -> Dict[str, str]:
    """
    Parse KEY = VALUE lines

    Blank lines and text after '#' are ignored; keys are case-insensitive and
    dashes are read as underscores.

    Args:
        lines: Raw lines
        source: Name used in error messages

    Returns:
        Mapping of normalized key to raw string value
    """
    values: Dict[str, str] = {}
    for line_number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{line_number}: expected KEY = VALUE, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{line_number}: missing key")
        values[key.lower().replace("-", "_")] = value
    return values


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise ValueError(f"Config file {path} does not exist")
    return parse_key_values(path.read_text().splitlines(), str(path))


class ConfigValidator:
    """Checks run settings before any simulation starts"""

    STATES = ("free", "onset", "congested")

    @staticmethod
    def validate_parameter_overrides(overrides: Dict[str, Any]) -> tuple[bool, Optional[str]]:
        """
        Check that overrides name known parameters with acceptable values

        Args:
            overrides: Parameter name to value

        Returns:
            Tuple of (is_valid, error_message)
        """
        unknown = sorted(set(overrides) - set(SimulationParameters.model_fields))
        if unknown:
            return False, f"Unknown parameter(s): {', '.join(unknown)}"
        try:
            SimulationParameters().with_overrides(overrides)
        except ValidationError as e:
            first = e.errors()[0]
            return False, f"Invalid value for {first['loc'][0]}: {first['msg']}"
        return True, None

    @staticmethod
    def validate_states(states: List[str]) -> tuple[bool, Optional[str]]:
        bad = [state for state in states if state not in ConfigValidator.STATES]
        if bad:
            return False, f"Unknown traffic state(s) {bad}. Allowed: {ConfigValidator.STATES}"
        return True, None

    @staticmethod
    def validate_controllers(controllers: List[str]) -> tuple[bool, Optional[str]]:
        allowed = [kind.value for kind in ControllerKind]
        bad = [name for name in controllers if name not in allowed]
        if bad:
            return False, f"Unknown controller(s) {bad}. Allowed: {allowed}"
        return True, None

    @staticmethod
    def validate_seeds(seeds: int) -> tuple[bool, Optional[str]]:
        if seeds < 1:
            return False, f"Need at least one seed, got {seeds}"
        return True, None

    @staticmethod
    def validate_vot(values: List[float]) -> tuple[bool, Optional[str]]:
        if not values:
            return False, "Need at least one value of time"
        if any(value < 0 for value in values):
            return False, f"Values of time must be non-negative, got {values}"
        return True, None
