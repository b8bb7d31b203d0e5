"""
Cost Accounting and Statistics
Trip costs from recorded traces and two-sample t-tests between controllers
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import betainc

from core.energy import TEN_KM, CostBreakdown, CostParams, integrate_cost, tractive_power

logger = logging.getLogger(__name__)

MIN_RATE_SPEED = 0.1


def vehicle_trip_cost(
    trace: pd.DataFrame,
    vot_per_hour: float,
    params: CostParams,
    until: Optional[float] = None,
) -> CostBreakdown:
    """
    Generalized cost of one recorded trip

    Args:
        trace: Samples with columns t, v, a and beta, uniformly spaced in time
        vot_per_hour: Value of time in dollars per hour
        params: Cost parameters (eta_t is replaced by the value of time)
        until: Optional cut-off, in seconds after the first sample

    Returns:
        CostBreakdown over the (possibly truncated) trace
    """
    if trace.empty:
        raise ValueError("Cannot cost an empty trace")
    if until is not None:
        trace = trace[trace["t"] <= trace["t"].iloc[0] + until + 1e-9]
    params = replace(params, eta_t=vot_per_hour / 3600.0)
    return integrate_cost(
        trace["t"].to_numpy(),
        trace["v"].to_numpy(),
        trace["a"].to_numpy(),
        trace["beta"].to_numpy(),
        params,
    )


def mean_per_10km(costs: Iterable[CostBreakdown]) -> Optional[CostBreakdown]:
    """Average of the 10 km-normalized costs; trips without distance are left out"""
    normalized = [cost.normalized() for cost in costs if cost.distance > 0]
    if not normalized:
        return None
    count = len(normalized)
    return CostBreakdown(
        energy=sum(c.energy for c in normalized) / count,
        fuel_dollars=sum(c.fuel_dollars for c in normalized) / count,
        time_dollars=sum(c.time_dollars for c in normalized) / count,
        distance=TEN_KM,
    )


def upstream_mean_cost(
    traces: Sequence[pd.DataFrame],
    vot_per_hour: float,
    params: CostParams,
    n_sur: int = 30,
) -> Optional[CostBreakdown]:
    """
    Mean per-10 km cost of the upstream sample

    Vehicles that left the highway early contribute their partial traces.

    Args:
        traces: One trace per sampled upstream vehicle
        vot_per_hour: Value of time in dollars per hour
        params: Cost parameters
        n_sur: Sample size the caller asked for

    Returns:
        CostBreakdown normalized to 10 km, or None without usable traces
    """
    if len(traces) < n_sur:
        logger.warning(f"Upstream sample has {len(traces)} vehicles, fewer than {n_sur}")
    costs = [vehicle_trip_cost(trace, vot_per_hour, params) for trace in traces if len(trace) > 1]
    return mean_per_10km(costs)


def fuel_rate(trace: pd.DataFrame, params: CostParams) -> pd.Series:
    """Instantaneous fuel cost in dollars per 10 km, NaN while nearly stopped"""
    v = trace["v"].to_numpy(dtype=float)
    power = trace["beta"].to_numpy(dtype=float) * tractive_power(v, trace["a"].to_numpy(), params)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(v > MIN_RATE_SPEED, params.eta_f * power / v * TEN_KM, np.nan)
    return pd.Series(rate, index=trace["t"].to_numpy(), name="fuel_rate")


def mean_fuel_rate(traces: Sequence[pd.DataFrame], params: CostParams) -> pd.Series:
    """Per-epoch mean fuel rate over a group of vehicles present at that epoch"""
    if not traces:
        return pd.Series(dtype=float, name="fuel_rate")
    rates = pd.concat([fuel_rate(trace, params) for trace in traces])
    return rates.groupby(level=0).mean().rename("fuel_rate")


@dataclass(frozen=True)
class SampleSet:
    """Per-seed costs of one (controller, traffic state, value of time) cell"""
    label: str
    values: Tuple[float, ...]

    @classmethod
    def of(cls, label: str, values: Iterable[Optional[float]]) -> "SampleSet":
        return cls(label, tuple(float(v) for v in values if v is not None and math.isfinite(v)))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else math.nan


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: float
    significant: bool
    degenerate: bool = False


def t_test_two_tailed(
    sample_a: SampleSet,
    sample_b: SampleSet,
    welch: bool = False,
    alpha: float = 0.05,
) -> TTestResult:
    """
    Two-sample, two-tailed t-test

    Args:
        sample_a: First sample
        sample_b: Second sample
        welch: Use the unequal-variance form instead of the pooled one
        alpha: Significance level

    Returns:
        TTestResult; zero variance with equal means gives t = 0, p = 1, and
        zero variance with different means gives p = 0 flagged degenerate
    """
    a = np.asarray(sample_a.values, dtype=float)
    b = np.asarray(sample_b.values, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError(f"t-test needs at least 2 values per sample, got {na} and {nb}")
    diff = float(a.mean() - b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    if welch:
        se = math.sqrt(va / na + vb / nb)
        denominator = (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
        df = (va / na + vb / nb) ** 2 / denominator if denominator > 0 else float(na + nb - 2)
    else:
        df = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(pooled * (1.0 / na + 1.0 / nb))

    if se == 0.0:
        if diff == 0.0:
            return TTestResult(t=0.0, p=1.0, df=df, significant=False)
        return TTestResult(t=math.copysign(math.inf, diff), p=0.0, df=df, significant=True, degenerate=True)

    t = diff / se
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, p=p, df=df, significant=p < alpha)
