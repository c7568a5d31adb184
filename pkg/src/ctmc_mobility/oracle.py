"""Monte-Carlo event counting, independent of the closed-form indicators.

Trajectories are simulated directly from the holding-time/jump-chain
description of the process; no matrix exponential is involved. Every jump
is classified as a failure (W -> F), a repair (F -> W) or an inoccurrence
(a move inside W or inside F), and rates are estimated by the forward
difference ``(E N(t + w) - E N(t)) / w`` averaged over an ensemble.

The finite window biases the estimate by about ``(w / 2) * d rate / dt``,
i.e. ``O(w * max_rate^2)``; it vanishes at stationarity.

Randomness uses NumPy's ``SeedSequence``: the ensemble is cut into blocks
of ``block_size`` trajectories and block ``b`` draws from
``SeedSequence(seed).spawn(n_blocks)[b]``. Blocks are independent and
their integer tallies are summed, so results do not depend on the order
in which blocks are processed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Generator, InitialDistribution, StatePartition, as_distribution, as_partition, embedded_chain
from .errors import EmptyGrid, ModelError

__all__ = [
    "Trajectory",
    "EventCounts",
    "EmpiricalRates",
    "simulate_trajectory",
    "classify_events",
    "empirical_rates",
    "FAILURE",
    "REPAIR",
    "INOCCURRENCE",
]

FAILURE, REPAIR, INOCCURRENCE = 0, 1, 2


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-constant path on ``[0, horizon)``.

    ``states[0]`` is the initial state and ``states[k + 1]`` the state
    entered at ``jump_times[k]``.
    """

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.jump_times, dtype=float)
        states = np.asarray(self.states, dtype=np.int64)
        if states.size != times.size + 1:
            raise ModelError("need exactly one more state than jump times")
        if times.size and (np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] >= self.horizon):
            raise ModelError("jump times must be strictly increasing inside (0, horizon)")
        if np.any(states[1:] == states[:-1]):
            raise ModelError("a jump must change state")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "states", states)

    @property
    def n_jumps(self) -> int:
        return self.jump_times.size

    def state_at(self, times) -> np.ndarray:
        """State occupied at each of ``times`` (right-continuous path)."""
        idx = np.searchsorted(self.jump_times, np.asarray(times, dtype=float), side="right")
        return self.states[idx]

    def occupation_times(self, size: int) -> np.ndarray:
        edges = np.concatenate([[0.0], self.jump_times, [self.horizon]])
        return np.bincount(self.states, weights=np.diff(edges), minlength=size)


def _draw_initial(rng: np.random.Generator, alpha: np.ndarray, n: int) -> np.ndarray:
    cdf = np.cumsum(alpha)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)


def _jump_cdf(g: Generator) -> np.ndarray:
    cdf = np.cumsum(embedded_chain(g), axis=1)
    cdf[:, -1] = 1.0
    return cdf


def simulate_trajectory(g: Generator, a: InitialDistribution, horizon: float, seed: int) -> Trajectory:
    """One path on ``[0, horizon)``; identical for identical ``seed``."""
    if not horizon > 0:
        raise ModelError(f"horizon must be positive, got {horizon}")
    a = as_distribution(a, g.size)
    rng = np.random.default_rng(seed)
    rates = g.exit_rates
    cdf = _jump_cdf(g)
    state = int(_draw_initial(rng, a.probs, 1)[0])
    t = 0.0
    times, states = [], [state]
    while rates[state] > 0:
        t += rng.standard_exponential() / rates[state]
        if t >= horizon:
            break
        state = int(np.searchsorted(cdf[state], rng.random(), side="right"))
        times.append(t)
        states.append(state)
    return Trajectory(np.array(times), np.array(states), float(horizon))


def _categories(src: np.ndarray, dst: np.ndarray, working: np.ndarray) -> np.ndarray:
    ws, wd = working[src], working[dst]
    cat = np.full(src.shape, INOCCURRENCE, dtype=np.int64)
    cat[ws & ~wd] = FAILURE
    cat[~ws & wd] = REPAIR
    return cat


@dataclass(frozen=True, eq=False)
class EventCounts:
    """Cumulative event counts ``N_f, N_r, N_i`` evaluated on ``grid``."""

    grid: np.ndarray
    failures: np.ndarray
    repairs: np.ndarray
    inoccurrences: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.failures + self.repairs + self.inoccurrences


def classify_events(traj: Trajectory, part: StatePartition, grid) -> EventCounts:
    """Classify every jump and count those at or before each grid time."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise EmptyGrid("grid is empty")
    if grid.min() < 0 or grid.max() > traj.horizon:
        raise ModelError("grid must lie within [0, horizon]")
    working = part.working_mask()
    if traj.states.max(initial=0) >= working.size:
        raise ModelError("trajectory visits a state outside the partition")
    cat = _categories(traj.states[:-1], traj.states[1:], working)
    out = []
    for c in (FAILURE, REPAIR, INOCCURRENCE):
        times = traj.jump_times[cat == c]
        out.append(np.searchsorted(times, grid, side="right").astype(np.int64))
    return EventCounts(grid, *out)


@dataclass(frozen=True, eq=False)
class EmpiricalRates:
    """Ensemble estimates of the four rates with their standard errors."""

    grid: np.ndarray
    window: float
    ensemble_size: int
    rof: np.ndarray
    ror: np.ndarray
    roi: np.ndarray
    tmr: np.ndarray
    rof_se: np.ndarray
    ror_se: np.ndarray
    roi_se: np.ndarray
    tmr_se: np.ndarray
    multi_jump_fraction: np.ndarray  # share of paths with >= 2 jumps in the window

    def estimate(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def standard_error(self, name: str) -> np.ndarray:
        return getattr(self, f"{name}_se")


def _simulate_block(g, alpha, working, grid, window, n, rng):
    # per-path increments in (t_g, t_g + window] for each grid point and category
    s = g.size
    rates = g.exit_rates
    cdf = _jump_cdf(g)
    horizon = grid[-1] + window
    inc = np.zeros((n, grid.size, 3), dtype=np.int64)
    state = _draw_initial(rng, alpha, n)
    time = np.zeros(n)
    alive = np.flatnonzero(rates[state] > 0)
    while alive.size:
        r = rates[state[alive]]
        t_new = time[alive] + rng.standard_exponential(alive.size) / r
        u = rng.random(alive.size)
        keep = t_new < horizon
        alive, t_new, u = alive[keep], t_new[keep], u[keep]
        src = state[alive]
        dst = np.minimum((cdf[src] <= u[:, None]).sum(axis=1), s - 1)
        cat = _categories(src, dst, working)
        for k, t0 in enumerate(grid):
            hit = (t_new > t0) & (t_new <= t0 + window)
            inc[alive[hit], k, cat[hit]] += 1
        time[alive] = t_new
        state[alive] = dst
        alive = alive[rates[dst] > 0]
    return inc


def empirical_rates(
    g: Generator,
    a: InitialDistribution,
    part: StatePartition,
    grid,
    ensemble_size: int = 100_000,
    window: float = 0.01,
    seed: int = 0,
    block_size: int = 10_000,
) -> EmpiricalRates:
    """Estimate rof/ror/roi/tmr at each grid point from simulated paths."""
    part = as_partition(part, g.size)
    a = as_distribution(a, g.size)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise EmptyGrid("grid is empty")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ModelError("grid must be nonnegative and strictly increasing")
    if not window > 0:
        raise ModelError(f"window must be positive, got {window}")
    if ensemble_size < 1:
        raise ModelError("ensemble must contain at least one path")
    working = part.working_mask()
    n_blocks = -(-ensemble_size // block_size)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    sums = np.zeros((grid.size, 4), dtype=np.int64)
    squares = np.zeros((grid.size, 4), dtype=np.int64)
    multi = np.zeros(grid.size, dtype=np.int64)
    for b, child in enumerate(children):
        n = min(block_size, ensemble_size - b * block_size)
        inc = _simulate_block(g, a.probs, working, grid, window, n, np.random.default_rng(child))
        per = np.concatenate([inc, inc.sum(axis=2, keepdims=True)], axis=2)
        sums += per.sum(axis=0)
        squares += (per * per).sum(axis=0)
        multi += (per[:, :, 3] >= 2).sum(axis=0)

    n = ensemble_size
    mean = sums / n
    if n > 1:
        var = np.maximum(squares - n * mean * mean, 0.0) / (n - 1)
    else:
        var = np.zeros_like(mean)
    est = mean / window
    se = np.sqrt(var / n) / window
    return EmpiricalRates(
        grid=grid,
        window=float(window),
        ensemble_size=int(n),
        rof=est[:, 0],
        ror=est[:, 1],
        roi=est[:, 2],
        tmr=est[:, 3],
        rof_se=se[:, 0],
        ror_se=se[:, 1],
        roi_se=se[:, 2],
        tmr_se=se[:, 3],
        multi_jump_fraction=multi / n,
    )


def values_from_states(states, scheme, rng: np.random.Generator, top_width: Optional[float] = None) -> np.ndarray:
    """Synthetic raw values: uniform draws inside each state's bin.

    The open-ended last bin is given width ``top_width`` (default: the
    regular bin width).
    """
    states = np.asarray(states, dtype=np.int64)
    width = np.full(states.shape, float(scheme.bin_width))
    top = scheme.num_states - 1
    width[states == top] = scheme.bin_width if top_width is None else top_width
    lower = scheme.lower_bound + states * scheme.bin_width
    # stay clear of the upper edge, which belongs to the next bin
    return lower + rng.random(states.shape) * width * (1.0 - 1e-6)
