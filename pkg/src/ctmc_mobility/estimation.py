"""From a raw scalar time series to a continuous-time generator.

Pipeline: drop outliers, bin values into equal-width states, count
one-step transitions, row-normalize, then embed the sampled matrix into
continuous time through the principal matrix logarithm, ``Q = log(P)/dt``,
projected onto the set of valid generators. A two-parameter Weibull fit
characterizes the raw marginal distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
import scipy.linalg

from .config import DEFAULT_TOLERANCES
from .core import Generator, transition_matrix
from .errors import (
    AllZeroCounts,
    DegenerateSample,
    EmptySeries,
    LogarithmFailure,
    ModelError,
    NoConvergence,
    NonConvergent,
)

__all__ = [
    "BinningScheme",
    "FilteredSeries",
    "TransitionCounts",
    "EmbeddingResult",
    "WeibullParams",
    "filter_outliers",
    "discretize",
    "count_transitions",
    "empirical_transition_matrix",
    "principal_logm",
    "embed_generator",
    "weibull_mle",
    "weibull_loglik",
    "delta_method_se",
    "time_breaks",
    "SiteEstimate",
    "fit_series",
    "project_to_generator",
]

# Square roots are taken until ||A - I||_1 <= this; at that radius the
# degree-8 Pade approximant of log(I + X) is accurate to rounding.
_LOGM_THETA = 0.3
_PADE_DEGREE = 8
_EDGE_SLACK = 1e-9


@dataclass(frozen=True)
class BinningScheme:
    """Equal-width bins ``[lo + k w, lo + (k+1) w)``; the last bin is open-ended."""

    bin_width: float = 2.0
    num_states: int = 11
    lower_bound: float = 0.0

    def __post_init__(self):
        if not (self.bin_width > 0 and math.isfinite(self.bin_width)):
            raise ModelError(f"bin width must be positive, got {self.bin_width}")
        if self.num_states < 1:
            raise ModelError(f"need at least one state, got {self.num_states}")

    def edges(self) -> np.ndarray:
        """Lower edges of all bins."""
        return self.lower_bound + self.bin_width * np.arange(self.num_states)


@dataclass(frozen=True, eq=False)
class FilteredSeries:
    """Retained values plus the positions where adjacency was broken.

    ``break_points`` holds indices ``i`` into ``values`` such that the pair
    ``(values[i-1], values[i])`` straddles a removed sample.
    """

    values: np.ndarray
    dropped: int
    break_points: frozenset = field(default_factory=frozenset)
    kept_index: Optional[np.ndarray] = None


def filter_outliers(series, max_speed: float = 50.0, min_value: float = 0.0) -> FilteredSeries:
    """Remove values below ``min_value`` or above ``max_speed``.

    Non-finite values are removed as well.
    """
    x = np.asarray(series, dtype=float).ravel()
    keep = np.isfinite(x) & (x >= min_value) & (x <= max_speed)
    kept_index = np.flatnonzero(keep)
    # a break sits before every retained sample whose predecessor was removed
    gaps = np.flatnonzero(np.diff(kept_index) > 1) + 1
    return FilteredSeries(
        values=x[keep],
        dropped=int(x.size - kept_index.size),
        break_points=frozenset(int(i) for i in gaps),
        kept_index=kept_index,
    )


def discretize(series, scheme: BinningScheme = BinningScheme()) -> np.ndarray:
    """Map each value to its bin index; boundary values go to the upper bin."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise EmptySeries("cannot discretize an empty series")
    if not np.all(np.isfinite(x)) or np.any(x < scheme.lower_bound):
        bad = np.flatnonzero(~np.isfinite(x) | (x < scheme.lower_bound))[0]
        raise ModelError(f"value {x[bad]!r} at position {bad} is below the lowest bin")
    # values within 1e-9 bin widths below an edge are treated as on it, so
    # decimal inputs like 0.6 with width 0.2 land in the bin they name
    rel = (x - scheme.lower_bound) / scheme.bin_width
    k = np.floor(rel + _EDGE_SLACK).astype(np.int64)
    return np.minimum(k, scheme.num_states - 1)


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    counts: np.ndarray
    total_observations: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ModelError(f"counts must be square, got shape {c.shape}")
        if np.any(c < 0):
            raise ModelError("counts must be nonnegative")
        if c.sum() > max(self.total_observations - 1, 0):
            raise ModelError("more transitions than observation pairs")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def count_transitions(states, break_points: Iterable[int] = (), num_states: Optional[int] = None) -> TransitionCounts:
    """Tally ``N_ij = #{n : J_n = i, J_n+1 = j}`` over unbroken pairs.

    A break point ``i`` removes the pair ``(states[i-1], states[i])``.
    """
    j = np.asarray(states, dtype=np.int64).ravel()
    if num_states is None:
        num_states = int(j.max()) + 1 if j.size else 1
    if j.size and (j.min() < 0 or j.max() >= num_states):
        raise ModelError(f"state indices must lie in 0..{num_states - 1}")
    counts = np.zeros((num_states, num_states), dtype=np.int64)
    if j.size >= 2:
        valid = np.ones(j.size - 1, dtype=bool)
        bp = np.array(sorted(int(b) for b in break_points if 0 < int(b) < j.size), dtype=np.int64)
        valid[bp - 1] = False
        np.add.at(counts, (j[:-1][valid], j[1:][valid]), 1)
    return TransitionCounts(counts, int(j.size))


def empirical_transition_matrix(c: TransitionCounts, zero_row_policy: str = "self-loop") -> np.ndarray:
    """Row-normalize counts; ``zero_row_policy`` is ``"self-loop"`` or ``"uniform"``."""
    counts = np.asarray(c.counts, dtype=float)
    totals = counts.sum(axis=1)
    if not np.any(totals > 0):
        raise AllZeroCounts("no transitions were counted")
    if zero_row_policy not in ("self-loop", "uniform"):
        raise ValueError(f"unknown zero-row policy {zero_row_policy!r}")
    n = counts.shape[0]
    p = np.zeros_like(counts)
    seen = totals > 0
    p[seen] = counts[seen] / totals[seen, None]
    for i in np.flatnonzero(~seen):
        if zero_row_policy == "self-loop":
            p[i, i] = 1.0
        else:
            p[i, :] = 1.0 / n
    return p


def _realify(x: np.ndarray, what: str) -> np.ndarray:
    if np.iscomplexobj(x):
        scale = max(1.0, float(np.abs(x).max()))
        if np.abs(x.imag).max() > 1e-10 * scale:
            raise NonConvergent(f"{what} has a significant imaginary part")
        x = x.real
    return np.asarray(x, dtype=float)


def _check_log_spectrum(a: np.ndarray) -> None:
    ev = np.linalg.eigvals(a)
    scale = max(1.0, float(np.abs(ev).max()))
    on_axis = (np.abs(ev.imag) <= 1e-12 * scale) & (ev.real <= 1e-14 * scale)
    if np.any(on_axis) or np.any(np.abs(ev) == 0):
        raise LogarithmFailure(
            f"eigenvalues {ev[on_axis].real.tolist()} lie on the closed negative real axis; "
            "the principal logarithm is undefined"
        )


def _logm_iss(a: np.ndarray, max_roots: int):
    n = a.shape[0]
    eye = np.eye(n)
    x = np.array(a, dtype=float)
    roots = 0
    while np.linalg.norm(x - eye, 1) > _LOGM_THETA:
        if roots >= max_roots:
            raise NonConvergent(f"||A^(1/2^k) - I|| still above {_LOGM_THETA} after {roots} square roots")
        x = _realify(scipy.linalg.sqrtm(x), "matrix square root")
        if not np.all(np.isfinite(x)):
            raise NonConvergent("matrix square root produced non-finite entries")
        roots += 1
    d = x - eye
    nodes, weights = np.polynomial.legendre.leggauss(_PADE_DEGREE)
    nodes = (nodes + 1.0) / 2.0
    weights = weights / 2.0
    out = np.zeros((n, n))
    for node, weight in zip(nodes, weights):
        out += weight * np.linalg.solve(eye + node * d, d)
    return 2.0**roots * out, roots


def _logm_eig(a: np.ndarray) -> np.ndarray:
    ev, vec = np.linalg.eig(a)
    sep = np.abs(ev[:, None] - ev[None, :])[~np.eye(ev.size, dtype=bool)]
    if (sep.size and sep.min() < 1e-8) or np.linalg.cond(vec) > 1e8:
        raise NonConvergent("matrix is not safely diagonalizable for the eigen fallback")
    out = vec @ np.diag(np.log(ev.astype(complex))) @ np.linalg.inv(vec)
    return _realify(out, "eigen logarithm")


def principal_logm(a, method: str = "auto", max_roots: Optional[int] = None):
    """Principal logarithm of a real matrix.

    ``method="iss"`` uses inverse scaling and squaring: repeated square
    roots bring ``A`` within ``0.3`` of the identity, where a degree-8 Pade
    approximant (Gauss-Legendre partial-fraction form) is evaluated and
    scaled back by ``2^k``. ``"eig"`` uses an eigendecomposition, and
    ``"auto"`` tries ISS first and falls back to ``"eig"``.

    Returns ``(log_a, info)`` where ``info`` records the method used and
    the number of square roots.

    Raises
    ------
    LogarithmFailure
        An eigenvalue lies on the closed negative real axis.
    NonConvergent
        Every permitted method failed.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"matrix must be square, got shape {a.shape}")
    max_roots = DEFAULT_TOLERANCES.logm_max_roots if max_roots is None else max_roots
    _check_log_spectrum(a)
    if method in ("iss", "auto"):
        try:
            out, roots = _logm_iss(a, max_roots)
            return out, {"method": "iss", "square_roots": roots}
        except (NonConvergent, np.linalg.LinAlgError) as exc:
            if method == "iss":
                raise NonConvergent(str(exc)) from exc
    elif method != "eig":
        raise ValueError(f"unknown logarithm method {method!r}")
    return _logm_eig(a), {"method": "eig", "square_roots": 0}


@dataclass(frozen=True, eq=False)
class EmbeddingResult:
    generator: Generator
    raw_log: np.ndarray  # log(P)/dt before projection
    negativity_mass: float
    reconstruction_error: float
    method: str
    square_roots: int

    def diagnostics(self) -> dict:
        return {
            "negativity_mass": self.negativity_mass,
            "reconstruction_error": self.reconstruction_error,
            "logm_method": self.method,
            "square_roots": self.square_roots,
        }


def project_to_generator(raw: np.ndarray):
    """Clip negative off-diagonal rates to zero and rebalance the diagonal.

    Returns ``(rates, negativity_mass)``.
    """
    q = np.array(raw, dtype=float)
    off = ~np.eye(q.shape[0], dtype=bool)
    mass = float(np.maximum(-q[off], 0.0).sum())
    q[off] = np.maximum(q[off], 0.0)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q, mass


def embed_generator(p, dt: float = 1.0, method: str = "auto", max_roots: Optional[int] = None) -> EmbeddingResult:
    """Find a generator ``Q`` with ``exp(Q dt) ~= P``.

    The principal logarithm divided by ``dt`` is projected onto the
    generator cone. ``negativity_mass`` is the total negative off-diagonal
    rate removed by the projection, and ``reconstruction_error`` is
    ``max |exp(Q dt) - P|`` for the projected ``Q``.
    """
    p = np.asarray(p, dtype=float)
    if not dt > 0:
        raise ModelError(f"dt must be positive, got {dt}")
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ModelError(f"matrix must be square, got shape {p.shape}")
    if np.any(p < -1e-12) or np.abs(p.sum(axis=1) - 1).max() > 1e-9:
        raise ModelError("matrix is not row-stochastic")
    log_p, info = principal_logm(p, method=method, max_roots=max_roots)
    raw = log_p / dt
    rates, mass = project_to_generator(raw)
    g = Generator(rates)
    recon = float(np.abs(transition_matrix(g, dt).probs - p).max())
    return EmbeddingResult(g, raw, mass, recon, info["method"], info["square_roots"])


@dataclass(frozen=True)
class WeibullParams:
    scale_lambda: float
    shape_k: float
    n_samples: int = 0
    zeros_dropped: int = 0
    iterations: int = 0

    def __post_init__(self):
        for name in ("scale_lambda", "shape_k"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"Weibull {name} must be positive and finite, got {v}")


def weibull_loglik(samples, scale_lambda: float, shape_k: float) -> float:
    x = np.asarray(samples, dtype=float)
    z = x / scale_lambda
    return float(
        x.size * (math.log(shape_k) - math.log(scale_lambda))
        + (shape_k - 1) * np.log(z).sum()
        - np.power(z, shape_k).sum()
    )


def _profile(lx: np.ndarray, mean_lx: float, k: float):
    # shape equation and its derivative, evaluated with a log-sum-exp shift
    a = k * lx
    shift = a.max()
    w = np.exp(a - shift)
    s0 = w.sum()
    m1 = (w @ lx) / s0
    m2 = (w @ (lx * lx)) / s0
    return m1 - 1.0 / k - mean_lx, m2 - m1 * m1 + 1.0 / (k * k), shift, s0


def weibull_mle(samples, tol: Optional[float] = None, max_iters: Optional[int] = None) -> WeibullParams:
    """Two-parameter Weibull maximum-likelihood fit.

    Solves the profile equation for the shape ``k``,

        sum x^k ln x / sum x^k - 1/k - mean(ln x) = 0,

    by Newton's method kept inside a sign-change bracket (bisection when a
    step leaves it), then sets ``lambda = (mean x^k)^(1/k)``. Zero values
    are removed before fitting and counted in ``zeros_dropped``.
    """
    tol = DEFAULT_TOLERANCES.mle if tol is None else tol
    max_iters = DEFAULT_TOLERANCES.mle_max_iters if max_iters is None else max_iters
    x = np.asarray(samples, dtype=float).ravel()
    if np.any(~np.isfinite(x)) or np.any(x < 0):
        raise ModelError("Weibull samples must be finite and nonnegative")
    zeros = int(np.count_nonzero(x == 0))
    x = x[x > 0]
    if x.size < 2:
        raise DegenerateSample(f"need at least 2 positive samples, got {x.size}")
    lx = np.log(x)
    mean_lx = float(lx.mean())
    spread = float(lx.std())
    if spread <= 1e-12 * max(1.0, abs(mean_lx)):
        raise DegenerateSample("all samples are equal; the shape estimate diverges")

    k = math.pi / math.sqrt(6.0) / spread
    lo, hi = 0.0, math.inf
    for it in range(1, max_iters + 1):
        g, dg, _, _ = _profile(lx, mean_lx, k)
        if g < 0:
            lo = max(lo, k)
        else:
            hi = min(hi, k)
        step = -g / dg
        new = k + step
        if not (lo < new < hi):
            new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * k
            if lo == 0.0 and new <= 0.0:
                new = 0.5 * k
        step = new - k
        k = new
        if abs(step) < tol * max(1.0, k):
            break
    else:
        raise NoConvergence(f"shape iteration did not converge in {max_iters} steps (k = {k})")
    _, _, shift, s0 = _profile(lx, mean_lx, k)
    scale = math.exp((shift + math.log(s0 / x.size)) / k)
    return WeibullParams(float(scale), float(k), n_samples=int(x.size), zeros_dropped=zeros, iterations=it)


def delta_method_se(p_hat: np.ndarray, row_totals: np.ndarray, func: Callable, step: float = 1e-6) -> np.ndarray:
    """Standard errors of ``func(P_hat)`` from multinomial row sampling.

    Row ``i`` of ``P_hat`` is a proportion estimate from ``row_totals[i]``
    transitions. Derivatives are taken along the in-simplex directions
    ``e_j - p_i``, which keep every perturbed matrix row-stochastic; the
    multinomial variance is then ``sum_j p_ij D_ij^2 / N_i``. ``func`` maps
    a stochastic matrix to a 1-D array.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    base = np.atleast_1d(np.asarray(func(p_hat), dtype=float))
    n = p_hat.shape[0]
    var = np.zeros(base.size)
    for i in range(n):
        if row_totals[i] == 0:
            continue
        row = p_hat[i]
        for j in np.flatnonzero(row > 0):
            direction = -row.copy()
            direction[j] += 1.0
            up = p_hat.copy()
            up[i] += step * direction
            if row[j] - step * (1.0 - row[j]) >= 0:
                dn = p_hat.copy()
                dn[i] -= step * direction
                d = (np.atleast_1d(func(up)) - np.atleast_1d(func(dn))) / (2 * step)
            else:
                d = (np.atleast_1d(func(up)) - base) / step
            var += row[j] * d * d / row_totals[i]
    return np.sqrt(var)


def time_breaks(timestamps, dt_hours: float = 1.0, daily: bool = True) -> frozenset:
    """Raw positions ``i`` whose pair ``(i-1, i)`` must not be counted.

    A pair is broken when the spacing differs from ``dt_hours`` or, with
    ``daily=True``, when it crosses a calendar-day boundary.
    """
    out = set()
    step = dt_hours * 3600.0
    for i in range(1, len(timestamps)):
        prev, cur = timestamps[i - 1], timestamps[i]
        if abs((cur - prev).total_seconds() - step) > 1e-6:
            out.add(i)
        elif daily and cur.date() != prev.date():
            out.add(i)
    return frozenset(out)


@dataclass(frozen=True, eq=False)
class SiteEstimate:
    """Everything estimated from one site's series."""

    scheme: BinningScheme
    counts: TransitionCounts
    p_hat: np.ndarray
    embedding: EmbeddingResult
    weibull: Optional[WeibullParams]
    dropped_outliers: int
    missing: int
    occupancy: np.ndarray  # fraction of retained observations in each state
    weibull_error: str = ""

    def report(self) -> dict:
        counts = self.counts
        d = {
            "counts": {
                "total_observations": counts.total_observations,
                "transitions": int(counts.counts.sum()),
                "row_totals": counts.row_totals.tolist(),
                "matrix": counts.counts.tolist(),
            },
            "P_hat": self.p_hat.tolist(),
            "Q_hat": self.embedding.generator.rates.tolist(),
            "dropped": {"outliers": self.dropped_outliers, "missing": self.missing},
            "binning": {
                "bin_width": self.scheme.bin_width,
                "num_states": self.scheme.num_states,
                "lower_bound": self.scheme.lower_bound,
            },
            "occupancy": self.occupancy.tolist(),
        }
        d.update(self.embedding.diagnostics())
        if self.weibull is not None:
            d["weibull"] = {
                "scale_lambda": self.weibull.scale_lambda,
                "shape_k": self.weibull.shape_k,
                "n_samples": self.weibull.n_samples,
                "zeros_dropped": self.weibull.zeros_dropped,
            }
        else:
            d["weibull"] = {"error": self.weibull_error}
        return d


def fit_series(
    values,
    timestamps=None,
    scheme: BinningScheme = BinningScheme(),
    max_speed: float = 50.0,
    dt_hours: float = 1.0,
    daily_breaks: bool = True,
    zero_row_policy: str = "self-loop",
    logm_method: str = "auto",
) -> SiteEstimate:
    """Outlier filter, binning, counting and generator embedding for one site.

    The Weibull fit is attempted on the retained values; its failure is
    recorded in the result instead of aborting the estimation.
    """
    raw = np.asarray(values, dtype=float).ravel()
    if raw.size == 0:
        raise EmptySeries("series is empty")
    missing = int(np.count_nonzero(~np.isfinite(raw)))
    filtered = filter_outliers(raw, max_speed=max_speed, min_value=scheme.lower_bound)
    if filtered.values.size == 0:
        raise EmptySeries("no values remain after outlier removal")
    breaks = set(filtered.break_points)
    if timestamps is not None:
        if len(timestamps) != raw.size:
            raise ModelError("timestamps and values differ in length")
        raw_breaks = time_breaks(timestamps, dt_hours, daily_breaks)
        kept = filtered.kept_index
        breaks.update(p for p in range(1, kept.size) if kept[p] in raw_breaks)
    states = discretize(filtered.values, scheme)
    counts = count_transitions(states, breaks, num_states=scheme.num_states)
    p_hat = empirical_transition_matrix(counts, zero_row_policy)
    embedding = embed_generator(p_hat, dt_hours, method=logm_method)
    occupancy = np.bincount(states, minlength=scheme.num_states) / states.size
    weibull, werr = None, ""
    try:
        weibull = weibull_mle(filtered.values)
    except (DegenerateSample, NoConvergence) as exc:
        werr = f"{type(exc).__name__}: {exc}"
    return SiteEstimate(
        scheme=scheme,
        counts=counts,
        p_hat=p_hat,
        embedding=embedding,
        weibull=weibull,
        dropped_outliers=filtered.dropped - missing,
        missing=missing,
        occupancy=occupancy,
        weibull_error=werr,
    )
