"""Instantaneous mobility indicators of a Markov reliability model.

For a working/failure split ``W | F`` of the state space and the state
occupancy ``p(t)``:

* ``rof(t)``  rate of W -> F jumps (failures)
* ``ror(t)``  rate of F -> W jumps (repairs)
* ``roi(t)``  rate of jumps that stay inside W or inside F
* ``tmr(t)``  total jump rate, ``sum_h p_h(t) q_h``

Each is a scalar product of ``p(t)`` with a fixed vector of aggregated
rates, so ``tmr = rof + ror + roi`` holds identically and ``tmr`` does not
depend on the partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Generator,
    InitialDistribution,
    StatePartition,
    as_distribution,
    as_partition,
    stationary_distribution,
    transition_matrix,
    unconditional_distribution,
)
from .errors import EmptyGrid, ModelError

__all__ = [
    "AggregateRateVectors",
    "IndicatorSeries",
    "AsymptoticIndicators",
    "InitialComparison",
    "aggregate_rate_vectors",
    "rocof",
    "rocor",
    "roi",
    "tmr",
    "indicator_series",
    "asymptotic_indicators",
    "initial_indicator_comparison",
]

IDENTITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AggregateRateVectors:
    """Row sums of the four blocks of ``Q`` (diagonal excluded).

    ``out_of_W[k]`` is the failure rate of the k-th working state,
    ``out_of_F[k]`` the repair rate of the k-th failure state, and the
    ``within_*`` vectors hold the rates of moving to another state of the
    same subset.
    """

    out_of_W: np.ndarray
    out_of_F: np.ndarray
    within_W: np.ndarray
    within_F: np.ndarray


def aggregate_rate_vectors(g: Generator, part: StatePartition) -> AggregateRateVectors:
    part = as_partition(part, g.size)
    q = np.array(g.rates)
    np.fill_diagonal(q, 0.0)
    w, f = list(part.working), list(part.failure)
    return AggregateRateVectors(
        out_of_W=q[np.ix_(w, f)].sum(axis=1),
        out_of_F=q[np.ix_(f, w)].sum(axis=1),
        within_W=q[np.ix_(w, w)].sum(axis=1),
        within_F=q[np.ix_(f, f)].sum(axis=1),
    )


def _split(p: np.ndarray, part: StatePartition):
    return p[list(part.working)], p[list(part.failure)]


def _rates_from_occupancy(p: np.ndarray, part: StatePartition, agg: AggregateRateVectors, exit_rates):
    pw, pf = _split(p, part)
    rof = float(pw @ agg.out_of_W)
    ror = float(pf @ agg.out_of_F)
    roi = float(pw @ agg.within_W + pf @ agg.within_F)
    total = float(p @ exit_rates)
    return rof, ror, roi, total


def rocof(g: Generator, a: InitialDistribution, part: StatePartition, t: float) -> float:
    """Rate of occurrence of failures at time ``t``."""
    part = as_partition(part, g.size)
    pw, _ = _split(unconditional_distribution(g, as_distribution(a, g.size), t), part)
    return float(pw @ aggregate_rate_vectors(g, part).out_of_W)


def rocor(g: Generator, a: InitialDistribution, part: StatePartition, t: float) -> float:
    """Rate of occurrence of repairs at time ``t``."""
    part = as_partition(part, g.size)
    _, pf = _split(unconditional_distribution(g, as_distribution(a, g.size), t), part)
    return float(pf @ aggregate_rate_vectors(g, part).out_of_F)


def roi(g: Generator, a: InitialDistribution, part: StatePartition, t: float) -> float:
    """Rate of inoccurrence: jumps that change state but not subset."""
    part = as_partition(part, g.size)
    agg = aggregate_rate_vectors(g, part)
    pw, pf = _split(unconditional_distribution(g, as_distribution(a, g.size), t), part)
    return float(pw @ agg.within_W + pf @ agg.within_F)


def tmr(g: Generator, a: InitialDistribution, t: float) -> float:
    """Total mobility rate; independent of any working/failure split."""
    p = unconditional_distribution(g, as_distribution(a, g.size), t)
    return float(p @ g.exit_rates)


@dataclass(frozen=True, eq=False)
class IndicatorSeries:
    """The four indicators (and optionally availability) on a time grid."""

    grid: np.ndarray
    rof: np.ndarray
    ror: np.ndarray
    roi: np.ndarray
    tmr: np.ndarray
    availability: Optional[np.ndarray] = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise EmptyGrid("indicator series needs a non-empty time grid")
        if grid[0] < 0 or np.any(np.diff(grid) <= 0):
            raise ModelError("time grid must be nonnegative and strictly increasing")
        fields = {}
        for name in ("rof", "ror", "roi", "tmr"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != grid.shape:
                raise ModelError(f"{name} has shape {v.shape}, grid has {grid.shape}")
            if np.any(v < 0):
                raise ModelError(f"{name} has negative entries")
            fields[name] = v
        gap = np.abs(fields["tmr"] - fields["rof"] - fields["ror"] - fields["roi"])
        scale = max(1.0, float(fields["tmr"].max()))
        if gap.max() > IDENTITY_TOL * scale:
            raise ModelError(f"tmr differs from rof + ror + roi by {gap.max():.3e}")
        for name, v in fields.items():
            object.__setattr__(self, name, v)
        object.__setattr__(self, "grid", grid)
        if self.availability is not None:
            object.__setattr__(self, "availability", np.asarray(self.availability, dtype=float))

    def __len__(self):
        return self.grid.size

    def columns(self) -> dict:
        cols = {"t": self.grid, "rof": self.rof, "ror": self.ror, "roi": self.roi, "tmr": self.tmr}
        if self.availability is not None:
            cols["availability"] = self.availability
        return cols


def indicator_series(
    g: Generator,
    a: InitialDistribution,
    part: StatePartition,
    grid,
    with_availability: bool = True,
    tol: Optional[float] = None,
) -> IndicatorSeries:
    """Evaluate all indicators on ``grid``.

    ``p(t)`` is computed once per grid point and shared by the four
    indicators. Each point is computed independently of the others, so
    the result does not depend on evaluation order.
    """
    part = as_partition(part, g.size)
    a = as_distribution(a, g.size)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise EmptyGrid("grid is empty")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ModelError("grid must be nonnegative and strictly increasing")
    agg = aggregate_rate_vectors(g, part)
    exit_rates = g.exit_rates
    out = np.empty((grid.size, 4))
    avail = np.empty(grid.size)
    working = list(part.working)
    for k, t in enumerate(grid):
        p = a.probs if t == 0 else a.probs @ transition_matrix(g, t, tol).probs
        out[k] = _rates_from_occupancy(p, part, agg, exit_rates)
        avail[k] = p[working].sum()
    return IndicatorSeries(
        grid=grid,
        rof=out[:, 0],
        ror=out[:, 1],
        roi=out[:, 2],
        tmr=out[:, 3],
        availability=avail if with_availability else None,
    )


@dataclass(frozen=True, eq=False)
class AsymptoticIndicators:
    rof_inf: float
    ror_inf: float
    roi_inf: float
    tmr_inf: float
    availability_inf: float
    stationary: np.ndarray

    def as_dict(self) -> dict:
        return {
            "rof_inf": self.rof_inf,
            "ror_inf": self.ror_inf,
            "roi_inf": self.roi_inf,
            "tmr_inf": self.tmr_inf,
            "availability_inf": self.availability_inf,
            "stationary": self.stationary.tolist(),
        }


def asymptotic_indicators(g: Generator, part: StatePartition) -> AsymptoticIndicators:
    """Long-run indicators from the stationary law ``L``.

    The failure rate uses ``L`` restricted to the working states. Because
    stationary flux across the W/F cut balances, ``rof_inf == ror_inf``
    up to rounding. Raises :class:`~ctmc_mobility.errors.Reducible` when
    ``L`` is not unique.
    """
    part = as_partition(part, g.size)
    L = stationary_distribution(g)
    agg = aggregate_rate_vectors(g, part)
    rof, ror, roi_, total = _rates_from_occupancy(L, part, agg, g.exit_rates)
    return AsymptoticIndicators(
        rof_inf=rof,
        ror_inf=ror,
        roi_inf=roi_,
        tmr_inf=total,
        availability_inf=float(L[list(part.working)].sum()),
        stationary=L,
    )


@dataclass(frozen=True)
class InitialComparison:
    rof0: float
    ror0: float
    roi0: float
    tmr0: float
    dominant: str  # "rof", "ror" or "tie"

    @property
    def message(self) -> str:
        if self.dominant == "tie":
            return "rof(0) and ror(0) tie"
        return f"{self.dominant} dominates near 0"

    def as_dict(self) -> dict:
        return {
            "rof0": self.rof0,
            "ror0": self.ror0,
            "roi0": self.roi0,
            "tmr0": self.tmr0,
            "dominant": self.dominant,
            "message": self.message,
        }


def initial_indicator_comparison(
    g: Generator, a: InitialDistribution, part: StatePartition
) -> InitialComparison:
    """Indicators at ``t = 0`` read directly off ``alpha``; no exponential.

    By continuity, whichever of rof(0) and ror(0) is larger stays larger on
    some interval ``[0, eps)``; the size of that interval is not estimated.
    """
    part = as_partition(part, g.size)
    a = as_distribution(a, g.size)
    rof0, ror0, roi0, tmr0 = _rates_from_occupancy(
        a.probs, part, aggregate_rate_vectors(g, part), g.exit_rates
    )
    if math.isclose(rof0, ror0, rel_tol=1e-12, abs_tol=1e-15):
        dominant = "tie"
    else:
        dominant = "rof" if rof0 > ror0 else "ror"
    return InitialComparison(rof0, ror0, roi0, tmr0, dominant)
