"""
Scenario Runner
One trip of the subject vehicle under one controller, traffic state, value of time and seed
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from core.energy import CostBreakdown
from core.planner import TrajectoryPlanner
from core.road import RoadNetwork
from core.world import SimulationIntegrityError, WorldState
from services.controllers import ControllerKind
from services.costs import mean_fuel_rate, mean_per_10km, upstream_mean_cost, vehicle_trip_cost
from services.recorder import TraceRecorder
from services.subject import SubjectDriver
from services.traffic import TrafficSimulator, TrafficStateKind
from utils.config import SimulationParameters

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"


@dataclass(frozen=True)
class ScenarioSpec:
    controller: ControllerKind
    state: TrafficStateKind
    vot: float
    seed: int

    @property
    def label(self) -> str:
        return f"{self.controller.value}/{self.state.value}/vot{self.vot:g}"


@dataclass
class ScenarioResult:
    """Costs and counters of one finished trip"""
    spec: ScenarioSpec
    origin: float
    trip_time: float
    subject: CostBreakdown
    subject_first_window: CostBreakdown
    follower: Optional[CostBreakdown]
    upstream: Optional[CostBreakdown]
    downstream: Optional[CostBreakdown]
    replans: int = 0
    fallbacks: int = 0
    over_budget: int = 0
    merges: int = 0
    splits: int = 0
    lane_changes: int = 0
    wall_times: List[float] = field(default_factory=list)

    def to_row(self) -> Dict[str, object]:
        """Deterministic summary row (no wall-clock values)"""

        def per_10km(cost: Optional[CostBreakdown]) -> Optional[float]:
            return None if cost is None else cost.per_10km_dollars

        return {
            "controller": self.spec.controller.value,
            "state": self.spec.state.value,
            "vot": self.spec.vot,
            "seed": self.spec.seed,
            "origin": self.origin,
            "trip_time": self.trip_time,
            "subject_per_10km": per_10km(self.subject),
            "subject_fuel_per_10km": self.subject.fuel_per_10km,
            "subject_time_per_10km": None if self.subject.distance <= 0
            else self.subject.time_dollars * 10000.0 / self.subject.distance,
            "subject_first_window_per_10km": per_10km(self.subject_first_window),
            "follower_per_10km": per_10km(self.follower),
            "upstream_per_10km": per_10km(self.upstream),
            "upstream_fuel_per_10km": None if self.upstream is None else self.upstream.fuel_per_10km,
            "downstream_per_10km": per_10km(self.downstream),
            "replans": self.replans,
            "fallbacks": self.fallbacks,
            "merges": self.merges,
            "splits": self.splits,
            "lane_changes": self.lane_changes,
        }


class ScenarioRunner:
    """Warms up the traffic, inserts the subject and drives it to the end of the highway"""

    def __init__(
        self,
        params: Optional[SimulationParameters] = None,
        network: Optional[RoadNetwork] = None,
        budget_multiple: Optional[float] = None,
    ):
        """
        Initialize the runner

        Args:
            params: Simulation parameters; defaults to SimulationParameters()
            network: Road network; defaults to the reference highway
            budget_multiple: Planner wall-time limit in update periods (None disables)
        """
        self.params = params or SimulationParameters()
        self.network = network or self.params.network()
        self.budget_multiple = budget_multiple

    def _driver(self, controller: ControllerKind, vot: float) -> Optional[SubjectDriver]:
        if not controller.optimal:
            return None
        params = self.params
        planner = TrajectoryPlanner(
            limits=params.limits(),
            params=params.cost_params(vot),
            settings=params.planner_settings(),
            idm=params.idm(),
        )
        return SubjectDriver(controller, planner, params.behavior(), self.budget_multiple)

    def _tracked(self, world: WorldState) -> Dict[str, List[int]]:
        n = self.params.sample_per_lane
        subject = world.subject
        follower = world.follower_of(subject.id)
        return {
            "subject": [subject.id],
            "follower": [follower.id] if follower is not None else [],
            "upstream": [veh.id for veh in world.upstream_sample(n)],
            "downstream": [veh.id for veh in world.downstream_sample(n)],
        }

    def run(self, spec: ScenarioSpec, out_dir: Optional[Path] = None) -> ScenarioResult:
        """
        Simulate one trip

        Args:
            spec: Controller, traffic state, value of time and seed
            out_dir: Per-run output directory; nothing is written when None

        Returns:
            ScenarioResult

        Raises:
            SimulationIntegrityError: on overlap, NaN, over-long trips or planner budget overrun
        """
        params = self.params
        simulator = TrafficSimulator(params.behavior())
        world = simulator.warmup(spec.state, self.network, spec.seed, params.tau_s)
        subject = world.subject
        t0 = world.clock
        origin = subject.x
        cost_params = params.cost_params(spec.vot)
        recorder = TraceRecorder(cost_params, self._tracked(world), t0)
        driver = self._driver(spec.controller, spec.vot)

        recorder.record(world)
        end = self.network.total_length
        while subject.x < end:
            if world.clock - t0 > params.max_trip_time:
                raise SimulationIntegrityError(
                    f"Subject did not finish {spec.label} seed {spec.seed} within {params.max_trip_time:.0f}s"
                )
            action = None
            if driver is not None:
                driver.before_step(world)
                action = driver.committed.segment_at(world.clock + 1e-6).sub_action
            report = simulator.step(world, driver.motion if driver is not None else None)
            if driver is not None:
                driver.after_step(world, report)
            recorder.record(world, action)

        trip_time = world.clock - t0
        frame = recorder.frame()
        result = self._summarize(spec, world, recorder, frame, origin, trip_time, driver)
        logger.info(
            f"✅ {spec.label} seed {spec.seed}: {trip_time:.1f}s, "
            f"subject {result.subject.per_10km_dollars or 0.0:.4f} $/10km"
        )
        if driver is not None and driver.over_budget:
            logger.warning(f"{spec.label} seed {spec.seed}: {driver.over_budget} replans exceeded the update period")
        if out_dir is not None:
            self._write(Path(out_dir), world, recorder, frame, result)
        return result

    def _summarize(self, spec, world, recorder, frame, origin, trip_time, driver) -> ScenarioResult:
        params = self.params
        cost_params = params.cost_params(spec.vot)
        subject_trace = recorder.traces("subject", frame)[0]
        follower = recorder.traces("follower", frame)
        downstream = recorder.traces("downstream", frame)
        subject_id = world.subject_id
        events = world.event_log
        return ScenarioResult(
            spec=spec,
            origin=origin,
            trip_time=trip_time,
            subject=vehicle_trip_cost(subject_trace, spec.vot, cost_params),
            subject_first_window=vehicle_trip_cost(subject_trace, spec.vot, cost_params, until=params.first_window),
            follower=vehicle_trip_cost(follower[0], spec.vot, cost_params) if follower and len(follower[0]) > 1 else None,
            upstream=upstream_mean_cost(recorder.traces("upstream", frame), spec.vot, cost_params,
                                        n_sur=2 * params.sample_per_lane),
            downstream=mean_per_10km(
                vehicle_trip_cost(trace, spec.vot, cost_params) for trace in downstream if len(trace) > 1
            ),
            replans=len(driver.wall_times) if driver else 0,
            fallbacks=driver.fallbacks if driver else 0,
            over_budget=driver.over_budget if driver else 0,
            merges=len(events.of_kind("subject_merge")),
            splits=len(events.of_kind("subject_split")),
            lane_changes=sum(1 for e in events.of_kind("lane_change") if subject_id in e.ids),
            wall_times=list(driver.wall_times) if driver else [],
        )

    def _write(self, out_dir: Path, world: WorldState, recorder: TraceRecorder, frame: pd.DataFrame,
               result: ScenarioResult):
        out_dir.mkdir(parents=True, exist_ok=True)
        spec = result.spec
        cost_params = self.params.cost_params(spec.vot)
        frame.to_csv(out_dir / "trajectory.csv", index=False, float_format=FLOAT_FORMAT)
        world.event_log.write(out_dir / "events.log")

        rows = []
        for group in ("subject", "follower", "upstream", "downstream"):
            for trace in recorder.traces(group, frame):
                if len(trace) < 2:
                    continue
                cost = vehicle_trip_cost(trace, spec.vot, cost_params)
                rows.append({
                    "id": int(trace["id"].iloc[0]), "group": group, "energy": cost.energy,
                    "fuel_dollars": cost.fuel_dollars, "time_dollars": cost.time_dollars,
                    "distance": cost.distance, "per_10km": cost.per_10km_dollars,
                })
        pd.DataFrame(rows).to_csv(out_dir / "costs.csv", index=False, float_format=FLOAT_FORMAT)

        subject_trace = recorder.traces("subject", frame)[0]
        rates = pd.DataFrame({
            "subject": mean_fuel_rate([subject_trace], cost_params),
            "upstream": mean_fuel_rate(recorder.traces("upstream", frame), cost_params),
            "downstream": mean_fuel_rate(recorder.traces("downstream", frame), cost_params),
        })
        rates["subject_lane"] = subject_trace.set_index("t")["lane"].reindex(rates.index)
        rates.index.name = "t"
        rates.to_csv(out_dir / "fuel_rate.csv", float_format=FLOAT_FORMAT)

        velocity = subject_trace[["t", "v", "membership", "lane"]].rename(
            columns={"v": "subject_v", "membership": "subject_membership", "lane": "subject_lane"}
        )
        follower = recorder.traces("follower", frame)
        if follower:
            velocity = velocity.merge(
                follower[0][["t", "v"]].rename(columns={"v": "follower_v"}), on="t", how="left"
            )
        velocity.to_csv(out_dir / "velocity.csv", index=False, float_format=FLOAT_FORMAT)
        logger.info(f"Wrote run outputs to {out_dir}")


def run_scenario(
    spec: ScenarioSpec,
    params: Optional[SimulationParameters] = None,
    network: Optional[RoadNetwork] = None,
    out_dir: Optional[Path] = None,
    budget_multiple: Optional[float] = None,
) -> ScenarioResult:
    """Convenience wrapper around ScenarioRunner.run"""
    return ScenarioRunner(params, network, budget_multiple).run(spec, out_dir)
