"""
Experiment Matrix
Runs every controller over traffic states, values of time and seeds, then compares them
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from services.controllers import ControllerKind
from services.costs import SampleSet, t_test_two_tailed
from services.ranking import ControllerRanking
from services.scenario import FLOAT_FORMAT, ScenarioResult, ScenarioRunner, ScenarioSpec
from services.traffic import TrafficStateKind
from utils.config import SimulationParameters

logger = logging.getLogger(__name__)

COMPARED_METRICS = ("subject_per_10km", "upstream_per_10km")
RESULT_SORT = ["state", "vot", "controller", "seed"]


class ExperimentConfig(BaseModel):
    """Everything that defines one experiment matrix"""

    controllers: List[ControllerKind] = Field(default_factory=lambda: list(ControllerKind))
    states: List[TrafficStateKind] = Field(default_factory=lambda: list(TrafficStateKind))
    vot: List[float] = Field(default_factory=lambda: [0.0, 20.0])
    seeds: int = Field(25, ge=1)
    base_seed: int = Field(2019, ge=0)
    out_dir: str = "results"
    parameters: SimulationParameters = Field(default_factory=SimulationParameters)
    network_file: Optional[str] = None
    workers: int = Field(1, ge=1)
    welch: bool = False
    budget_multiple: Optional[float] = Field(None, gt=0)
    write_runs: bool = True

    def seed_values(self) -> List[int]:
        # Shared by every controller so the comparisons see the same traffic
        return [self.base_seed + index for index in range(self.seeds)]

    def scenario_specs(self) -> List[ScenarioSpec]:
        return [
            ScenarioSpec(controller=controller, state=state, vot=float(vot), seed=seed)
            for state, vot, controller, seed in itertools.product(
                self.states, self.vot, self.controllers, self.seed_values()
            )
        ]

    def run_count(self) -> int:
        return len(self.controllers) * len(self.states) * len(self.vot) * self.seeds

    def run_dir(self, spec: ScenarioSpec) -> Path:
        return (
            Path(self.out_dir) / spec.controller.value / spec.state.value
            / f"vot{spec.vot:g}" / f"seed_{spec.seed:04d}"
        )


@dataclass
class MatrixResult:
    results: pd.DataFrame
    ttests: pd.DataFrame
    timing: pd.DataFrame
    ranking: pd.DataFrame


def _run_one(config: ExperimentConfig, spec: ScenarioSpec) -> ScenarioResult:
    params = config.parameters
    runner = ScenarioRunner(
        params=params,
        network=params.network(config.network_file),
        budget_multiple=config.budget_multiple,
    )
    return runner.run(spec, config.run_dir(spec) if config.write_runs else None)


def pairwise_ttests(results: pd.DataFrame, welch: bool = False, alpha: float = 0.05) -> pd.DataFrame:
    """
    Two-tailed t-tests between every controller pair of each (state, value of time) cell

    Args:
        results: One row per run
        welch: Use the unequal-variance test
        alpha: Significance level

    Returns:
        One row per (state, vot, metric, controller pair); pairs with fewer than
        two values on either side are skipped
    """
    rows = []
    for (state, vot), cell in results.groupby(["state", "vot"], sort=True):
        controllers = sorted(cell["controller"].unique())
        for metric in COMPARED_METRICS:
            if metric not in cell:
                continue
            samples = {
                name: SampleSet.of(name, cell.loc[cell["controller"] == name, metric].tolist())
                for name in controllers
            }
            for name_a, name_b in itertools.combinations(controllers, 2):
                a, b = samples[name_a], samples[name_b]
                if len(a) < 2 or len(b) < 2:
                    logger.warning(f"Skipping t-test {name_a} vs {name_b} on {metric} ({state}/vot{vot:g}): too few values")
                    continue
                test = t_test_two_tailed(a, b, welch=welch, alpha=alpha)
                rows.append({
                    "state": state, "vot": vot, "metric": metric,
                    "controller_a": name_a, "controller_b": name_b,
                    "mean_a": a.mean, "mean_b": b.mean, "n_a": len(a), "n_b": len(b),
                    "t": test.t, "p": test.p, "df": test.df,
                    "significant": test.significant, "degenerate": test.degenerate,
                })
    return pd.DataFrame(rows)


def timing_table(results: List[ScenarioResult]) -> pd.DataFrame:
    """Planner wall-time statistics per run"""
    rows = []
    for result in results:
        spec = result.spec
        times = pd.Series(result.wall_times, dtype=float)
        rows.append({
            "controller": spec.controller.value, "state": spec.state.value, "vot": spec.vot, "seed": spec.seed,
            "replans": len(times),
            "mean_wall_time": times.mean() if len(times) else None,
            "max_wall_time": times.max() if len(times) else None,
            "over_budget": result.over_budget,
        })
    frame = pd.DataFrame(rows)
    return frame.sort_values(RESULT_SORT, kind="stable").reset_index(drop=True) if rows else frame


def run_matrix(config: ExperimentConfig, progress: bool = True) -> MatrixResult:
    """
    Run the full experiment matrix and write its tables

    Args:
        config: Experiment configuration
        progress: Show a progress bar

    Returns:
        MatrixResult with results, t-tests, timing and ranking tables

    Raises:
        SimulationIntegrityError: when any run breaks a simulation invariant
    """
    specs = config.scenario_specs()
    logger.info(
        f"Running {len(specs)} scenarios ({len(config.controllers)} controllers, {len(config.states)} states, "
        f"{len(config.vot)} values of time, {config.seeds} seeds) with {config.workers} worker(s)"
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    results: List[ScenarioResult] = []
    if config.workers == 1:
        for spec in tqdm(specs, desc="scenarios", disable=not progress):
            results.append(_run_one(config, spec))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_one, config, spec) for spec in specs]
            for future in tqdm(futures, desc="scenarios", disable=not progress):
                results.append(future.result())

    frame = pd.DataFrame([result.to_row() for result in results])
    frame = frame.sort_values(RESULT_SORT, kind="stable").reset_index(drop=True)
    ttests = pairwise_ttests(frame, welch=config.welch)
    timing = timing_table(results)
    ranking_engine = ControllerRanking()
    ranking = ranking_engine.to_frame(ranking_engine.rank(frame))

    frame.to_csv(out_dir / "results.csv", index=False, float_format=FLOAT_FORMAT)
    ttests.to_csv(out_dir / "ttests.csv", index=False, float_format=FLOAT_FORMAT)
    timing.to_csv(out_dir / "timing.csv", index=False, float_format=FLOAT_FORMAT)
    ranking.to_csv(out_dir / "ranking.csv", index=False, float_format=FLOAT_FORMAT)
    logger.info(f"✅ Wrote results.csv, ttests.csv, timing.csv and ranking.csv to {out_dir}")
    return MatrixResult(results=frame, ttests=ttests, timing=timing, ranking=ranking)


def summary_by_cell(results: pd.DataFrame) -> Dict[str, pd.DataFrame]:
    """Mean and standard deviation of the compared metrics per metric"""
    summary = {}
    for metric in COMPARED_METRICS:
        if metric in results:
            summary[metric] = (
                results.groupby(["state", "vot", "controller"])[metric].agg(["mean", "std", "count"]).reset_index()
            )
    return summary
