"""
Controller Ranking
Orders the controllers by mean cost within each traffic state and value of time
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import pandas as pd

from services.costs import SampleSet

logger = logging.getLogger(__name__)

RANKED_METRICS = ("subject_per_10km", "upstream_per_10km")


@dataclass
class ControllerScore:
    """Aggregated cost of one controller in one (state, value of time) cell"""
    state: str
    vot: float
    metric: str
    controller: str
    mean: float
    std: float
    n: int
    rank: int = 0
    gain_vs_baseline: float = math.nan


class ControllerRanking:
    """
    Ranks controllers by mean cost per 10 km (lower is better)

    The gain against the baseline controller is the relative cost reduction
    of its mean, so a positive value means cheaper than the baseline.
    """

    def __init__(self, baseline: str = "CF", metrics: Sequence[str] = RANKED_METRICS):
        """
        Initialize the ranking

        Args:
            baseline: Controller the gains are measured against
            metrics: Result columns to rank on
        """
        self.baseline = baseline
        self.metrics = tuple(metrics)

    def rank(self, results: pd.DataFrame) -> List[ControllerScore]:
        """
        Rank the controllers of a results table

        Args:
            results: One row per run with controller, state, vot and the metric columns

        Returns:
            List of ControllerScore sorted by state, vot, metric and rank
        """
        scores: List[ControllerScore] = []
        for (state, vot), cell in results.groupby(["state", "vot"], sort=True):
            for metric in self.metrics:
                if metric not in cell:
                    continue
                scores.extend(self._rank_cell(state, float(vot), metric, cell))
        logger.info(f"Ranked {len(scores)} controller cells")
        return scores

    def _rank_cell(self, state: str, vot: float, metric: str, cell: pd.DataFrame) -> List[ControllerScore]:
        samples: Dict[str, SampleSet] = {
            controller: SampleSet.of(controller, part[metric].tolist())
            for controller, part in cell.groupby("controller", sort=True)
        }
        cell_scores = [
            ControllerScore(state=state, vot=vot, metric=metric, controller=name,
                            mean=sample.mean, std=sample.std, n=len(sample))
            for name, sample in samples.items()
            if len(sample) > 0
        ]
        cell_scores.sort(key=lambda score: (score.mean, score.controller))
        for position, score in enumerate(cell_scores, start=1):
            score.rank = position

        baseline = samples.get(self.baseline)
        if baseline is not None and len(baseline) > 0 and baseline.mean != 0:
            for score in cell_scores:
                score.gain_vs_baseline = (baseline.mean - score.mean) / baseline.mean
        return cell_scores

    def to_frame(self, scores: List[ControllerScore]) -> pd.DataFrame:
        columns = list(ControllerScore.__dataclass_fields__)
        return pd.DataFrame([score.__dict__ for score in scores], columns=columns)

    def get_best(self, scores: List[ControllerScore], state: str, vot: float, metric: str = "subject_per_10km") -> str:
        """Cheapest controller of one cell"""
        for score in scores:
            if score.state == state and score.vot == vot and score.metric == metric and score.rank == 1:
                return score.controller
        raise KeyError(f"No ranking for {state}/vot{vot:g}/{metric}")
