"""Finite-state continuous-time Markov models.

States are indexed ``0 .. s-1``. All model objects are immutable: their
arrays are copied on construction and flagged read-only, so they can be
shared freely.

The transient law ``P(t) = exp(tQ)`` is computed by uniformization
(Jensen's method). Writing ``S = I + Q / rate`` with ``rate = max_i q_i``,

    exp(tQ) = sum_k  Poisson(k; rate * t) * S^k

is a mixture of powers of a stochastic matrix, so, unlike a Pade
approximant, the result is nonnegative and row-stochastic by construction.
Large ``rate * t`` is split into ``2^j`` equal steps followed by ``j``
squarings to keep the Poisson weights away from underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .config import DEFAULT_TOLERANCES
from .errors import (
    EmptyWorkingSet,
    InvalidDistribution,
    InvalidPartition,
    ModelError,
    NegativeOffDiagonal,
    NotSquare,
    Reducible,
    RowSumViolation,
    SolverFailure,
    TruncationFailure,
)

__all__ = [
    "Generator",
    "InitialDistribution",
    "StatePartition",
    "TransitionMatrix",
    "validate_generator",
    "transition_matrix",
    "unconditional_distribution",
    "availability",
    "reliability",
    "stationary_distribution",
    "embedded_chain",
    "embedded_stationary_distribution",
    "closed_classes",
    "spectral_gap",
]

# Largest rate*t handled by a single uniformization pass.
_UNIFORMIZATION_CHUNK = 10.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _checked_rates(raw, tolerance: float) -> np.ndarray:
    q = np.array(raw, dtype=float, copy=True)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise NotSquare(f"generator must be a square matrix, got shape {q.shape}")
    s = q.shape[0]
    if s < 2:
        raise NotSquare(f"generator needs at least 2 states, got {s}")
    if not np.all(np.isfinite(q)):
        raise ModelError("generator contains non-finite entries")
    off = ~np.eye(s, dtype=bool)
    worst = q[off].min()
    if worst < -tolerance:
        i, j = np.argwhere((q < -tolerance) & off)[0]
        raise NegativeOffDiagonal(f"q[{i},{j}] = {q[i, j]!r} is negative")
    row_sums = q.sum(axis=1)
    bad = np.abs(row_sums) > tolerance
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumViolation(f"row {i} sums to {row_sums[i]!r}, not 0")
    q[off] = np.maximum(q[off], 0.0)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


@dataclass(frozen=True, eq=False)
class Generator:
    """Transition-rate matrix ``Q`` in units of 1/hour.

    Construction validates with the default tolerance and recomputes the
    diagonal as the negated off-diagonal row sum. Use
    :func:`validate_generator` to choose the tolerance.
    """

    rates: np.ndarray

    def __post_init__(self):
        rates = _checked_rates(self.rates, DEFAULT_TOLERANCES.generator)
        object.__setattr__(self, "rates", _frozen(rates))

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        """``q_i = -q_ii``, the total rate of leaving each state."""
        return -np.diag(self.rates)

    def __repr__(self):
        return f"Generator(size={self.size}, rates={self.rates.tolist()!r})"


@dataclass(frozen=True, eq=False)
class InitialDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, copy=True)
        tol = DEFAULT_TOLERANCES.probability
        if p.ndim != 1 or p.size == 0:
            raise InvalidDistribution("distribution must be a non-empty vector")
        if not np.all(np.isfinite(p)) or p.min() < -tol or p.max() > 1 + tol:
            raise InvalidDistribution(f"entries must lie in [0, 1]: {p.tolist()}")
        if abs(p.sum() - 1.0) > tol:
            raise InvalidDistribution(f"entries sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", _frozen(np.clip(p, 0.0, 1.0)))

    @property
    def size(self) -> int:
        return self.probs.size

    @classmethod
    def point_mass(cls, size: int, state: int) -> "InitialDistribution":
        if not 0 <= state < size:
            raise InvalidDistribution(f"state {state} outside 0..{size - 1}")
        p = np.zeros(size)
        p[state] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, size: int) -> "InitialDistribution":
        return cls(np.full(size, 1.0 / size))

    def __repr__(self):
        return f"InitialDistribution({self.probs.tolist()!r})"


@dataclass(frozen=True)
class StatePartition:
    """Disjoint split of ``{0..s-1}`` into working and failure states."""

    working: tuple
    failure: tuple

    def __post_init__(self):
        w = tuple(sorted(int(i) for i in self.working))
        f = tuple(sorted(int(i) for i in self.failure))
        if not w:
            raise EmptyWorkingSet("the working set is empty")
        if not f:
            raise InvalidPartition("the failure set is empty")
        if len(set(w)) != len(w) or len(set(f)) != len(f):
            raise InvalidPartition("repeated state index in partition")
        if set(w) & set(f):
            raise InvalidPartition(f"states {sorted(set(w) & set(f))} are both working and failed")
        size = len(w) + len(f)
        if set(w) | set(f) != set(range(size)):
            raise InvalidPartition(f"partition does not cover 0..{size - 1}")
        object.__setattr__(self, "working", w)
        object.__setattr__(self, "failure", f)

    @property
    def size(self) -> int:
        return len(self.working) + len(self.failure)

    @classmethod
    def from_working(cls, working: Iterable[int], size: int) -> "StatePartition":
        working = [int(i) for i in working]
        bad = [i for i in working if not 0 <= i < size]
        if bad:
            raise InvalidPartition(f"working states {bad} outside 0..{size - 1}")
        ws = set(working)
        return cls(tuple(working), tuple(i for i in range(size) if i not in ws))

    def working_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[list(self.working)] = True
        return mask

    def check_size(self, size: int) -> None:
        if self.size != size:
            raise InvalidPartition(f"partition covers {self.size} states, model has {size}")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    time: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))


def validate_generator(raw, tolerance: Optional[float] = None) -> Generator:
    """Check ``raw`` against the generator conditions and normalize it.

    Off-diagonal entries in ``[-tolerance, 0)`` are set to zero and the
    diagonal is recomputed, so the returned matrix has exactly zero row
    sums up to rounding.

    Raises
    ------
    NotSquare, NegativeOffDiagonal, RowSumViolation
    """
    tol = DEFAULT_TOLERANCES.generator if tolerance is None else tolerance
    return Generator(_checked_rates(raw, tol))


def _check_distribution(g: Generator, a: InitialDistribution) -> None:
    if a.size != g.size:
        raise InvalidDistribution(f"distribution has {a.size} entries, model has {g.size} states")


def _uniformized_expm(m: np.ndarray, t: float, tol: float) -> np.ndarray:
    # m: off-diagonal >= 0, row sums <= 0 (generator or sub-generator)
    n = m.shape[0]
    eye = np.eye(n)
    if t < 0:
        raise ModelError(f"time must be nonnegative, got {t}")
    rate = float(np.max(-np.diag(m))) if n else 0.0
    if t == 0 or rate == 0.0:
        return eye
    total = rate * t
    j = max(0, math.ceil(math.log2(total / _UNIFORMIZATION_CHUNK))) if total > _UNIFORMIZATION_CHUNK else 0
    lam = total / 2.0**j
    s = eye + m / rate
    cap = int(10 * lam) + 100
    weight = math.exp(-lam)
    mass = weight
    term = eye
    out = weight * eye
    k = 0
    while 1.0 - mass >= tol:
        k += 1
        if k > cap:
            raise TruncationFailure(
                f"Poisson tail still {1.0 - mass:.3e} after {cap} terms (rate*t = {lam:.3g})"
            )
        term = term @ s
        weight *= lam / k
        out += weight * term
        mass += weight
    out /= mass
    for _ in range(j):
        out = out @ out
    return out


def transition_matrix(g: Generator, t: float, tol: Optional[float] = None) -> TransitionMatrix:
    """``P(t) = exp(tQ)`` by uniformization.

    ``tol`` bounds the discarded Poisson tail weight (default 1e-12).
    """
    tol = DEFAULT_TOLERANCES.expm if tol is None else tol
    p = _uniformized_expm(g.rates, float(t), tol)
    row_err = np.abs(p.sum(axis=1) - 1.0).max()
    if row_err > max(tol, DEFAULT_TOLERANCES.stochastic):
        raise TruncationFailure(f"row sums of P({t}) deviate from 1 by {row_err:.3e}")
    if p.min() < -tol:
        raise TruncationFailure(f"P({t}) has entry {p.min():.3e} below zero")
    return TransitionMatrix(float(t), np.clip(p, 0.0, 1.0))


def unconditional_distribution(
    g: Generator, a: InitialDistribution, t: float, tol: Optional[float] = None
) -> np.ndarray:
    """State occupancy ``p(t) = alpha P(t)``."""
    _check_distribution(g, a)
    if t == 0:
        return np.array(a.probs)
    return a.probs @ transition_matrix(g, t, tol).probs


def availability(
    g: Generator, a: InitialDistribution, part: StatePartition, t: float, tol: Optional[float] = None
) -> float:
    """Probability of being in a working state at time ``t``."""
    part.check_size(g.size)
    p = unconditional_distribution(g, a, t, tol)
    return float(p[list(part.working)].sum())


def reliability(
    g: Generator, a: InitialDistribution, part: StatePartition, t: float, tol: Optional[float] = None
) -> float:
    """Probability of staying in the working set throughout ``[0, t]``.

    Uses the working-to-working block of ``Q``; leaving ``W`` acts as an
    absorbing cemetery, so the exponential is substochastic.
    """
    part.check_size(g.size)
    _check_distribution(g, a)
    if not part.working:
        raise EmptyWorkingSet("reliability needs at least one working state")
    w = list(part.working)
    sub = g.rates[np.ix_(w, w)]
    tol = DEFAULT_TOLERANCES.expm if tol is None else tol
    survive = _uniformized_expm(sub, float(t), tol)
    value = float(a.probs[w] @ survive.sum(axis=1))
    return min(max(value, 0.0), 1.0)


def closed_classes(rates: np.ndarray) -> list:
    """Closed communicating classes of a rate (or stochastic-minus-I) matrix."""
    n = rates.shape[0]
    adj = (rates > 0) & ~np.eye(n, dtype=bool)
    ncomp, labels = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(n, dtype=bool)
        outside[members] = False
        if not adj[np.ix_(members, np.flatnonzero(outside))].any():
            closed.append(members.tolist())
    return closed


def _solve_balance(m: np.ndarray, tol: float) -> np.ndarray:
    # Stationary vector of a generator-like matrix m (rows sum to 0).
    classes = closed_classes(m)
    if len(classes) > 1:
        raise Reducible(f"{len(classes)} closed classes {classes}; stationary law is not unique")
    n = m.shape[0]
    a = np.array(m.T, dtype=float)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"balance system is singular: {exc}") from exc
    scale = max(1.0, float(np.abs(m).max()))
    if not np.all(np.isfinite(x)) or x.min() < -tol * scale:
        raise SolverFailure(f"balance solution is not a probability vector: {x.tolist()}")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    resid = float(np.abs(x @ m).max())
    if resid > tol * scale:
        raise SolverFailure(f"balance residual {resid:.3e} exceeds {tol * scale:.3e}")
    return x


def stationary_distribution(g: Generator, tol: Optional[float] = None) -> np.ndarray:
    """Solve ``L Q = 0, sum(L) = 1`` directly.

    One balance equation is replaced by the normalization constraint. The
    generator must have a single closed class (transient states, if any,
    get probability zero); otherwise :class:`Reducible` is raised.
    """
    tol = DEFAULT_TOLERANCES.stationary if tol is None else tol
    return _solve_balance(g.rates, tol)


def embedded_chain(g: Generator) -> np.ndarray:
    """Jump-chain matrix with entries ``q_ij / q_i``.

    Absorbing states (``q_i = 0``) get a self-loop of probability one.
    """
    q = g.rates
    rates = g.exit_rates
    p = np.zeros_like(q)
    moving = rates > 0
    p[moving] = q[moving] / rates[moving, None]
    p[moving, np.flatnonzero(moving)] = 0.0
    for i in np.flatnonzero(~moving):
        p[i, i] = 1.0
    return p


def embedded_stationary_distribution(g: Generator, tol: Optional[float] = None) -> np.ndarray:
    """Stationary vector of the jump chain."""
    tol = DEFAULT_TOLERANCES.stationary if tol is None else tol
    p = embedded_chain(g)
    return _solve_balance(p - np.eye(g.size), tol)


def spectral_gap(g: Generator) -> float:
    """Smallest modulus of the real part among the nonzero eigenvalues of ``Q``."""
    ev = np.linalg.eigvals(g.rates)
    re = np.abs(ev.real)
    scale = max(1.0, float(np.abs(g.rates).max()))
    nonzero = re[np.abs(ev) > 1e-9 * scale]
    if nonzero.size == 0:
        return 0.0
    return float(nonzero.min())


def as_partition(part, size: int) -> StatePartition:
    """Accept a :class:`StatePartition` or a sequence of working-state indices."""
    if isinstance(part, StatePartition):
        part.check_size(size)
        return part
    return StatePartition.from_working(part, size)


def as_distribution(a, size: int) -> InitialDistribution:
    if isinstance(a, InitialDistribution):
        return a
    return InitialDistribution(np.asarray(a, dtype=float))
