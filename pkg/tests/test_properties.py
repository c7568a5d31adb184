import itertools

import numpy as np
import scipy.linalg
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import generators, irreducible_generators, models
from ctmc_mobility import (
    BinningScheme,
    Generator,
    InitialDistribution,
    StatePartition,
    asymptotic_indicators,
    count_transitions,
    discretize,
    embed_generator,
    embedded_stationary_distribution,
    indicator_series,
    reliability,
    spectral_gap,
    stationary_distribution,
    tmr,
    transition_matrix,
    weibull_mle,
)
from ctmc_mobility.estimation import weibull_loglik

times = st.floats(0.0, 10.0)


@given(generators(), st.floats(0.0, 100.0))
def test_rows_sum_to_one(g, t):
    P = transition_matrix(g, t).probs
    assert np.max(np.abs(P.sum(axis=1) - 1)) < 1e-10
    assert P.min() >= 0 and P.max() <= 1


@given(generators(), times, times)
def test_semigroup(g, s, t):
    lhs = transition_matrix(g, s).probs @ transition_matrix(g, t).probs
    assert np.max(np.abs(lhs - transition_matrix(g, s + t).probs)) < 1e-8


@given(generators(), st.floats(0.0, 5.0))
def test_kolmogorov_equations(g, t):
    h = 1e-5
    P = transition_matrix(g, t).probs
    deriv = (transition_matrix(g, t + h, tol=1e-15).probs - transition_matrix(g, t, tol=1e-15).probs) / h
    assert np.max(np.abs(deriv - P @ g.rates)) < 1e-3
    assert np.max(np.abs(deriv - g.rates @ P)) < 1e-3


@given(generators(), st.floats(0.0, 30.0))
def test_matches_scipy_expm(g, t):
    assert np.max(np.abs(transition_matrix(g, t).probs - scipy.linalg.expm(t * g.rates))) < 1e-9


@given(irreducible_generators())
def test_stationarity_and_embedded_cross_check(g):
    L = stationary_distribution(g)
    assert np.max(np.abs(L @ g.rates)) < 1e-10
    weighted = embedded_stationary_distribution(g) / g.exit_rates
    assert np.max(np.abs(L - weighted / weighted.sum())) < 1e-8


@given(models(), st.lists(st.floats(0.0, 20.0), min_size=2, max_size=12, unique=True))
def test_reliability_non_increasing(model, ts):
    g, a, part = model
    values = [reliability(g, a, part, t) for t in sorted(ts)]
    assert all(b <= a_ + 1e-12 for a_, b in zip(values, values[1:]))


@given(models(), st.floats(0.0, 20.0))
def test_identity_and_nonnegativity(model, t):
    g, a, part = model
    series = indicator_series(g, a, part, [t])
    assert abs(series.tmr[0] - series.rof[0] - series.ror[0] - series.roi[0]) < 1e-10
    for name in ("rof", "ror", "roi", "tmr"):
        assert getattr(series, name)[0] >= 0


@given(generators(min_size=4, max_size=4), st.floats(0.0, 10.0), st.integers(0, 3))
def test_tmr_independent_of_partition(g, t, start):
    a = InitialDistribution.point_mass(4, start)
    reference = tmr(g, a, t)
    for k in range(1, 4):
        for working in itertools.combinations(range(4), k):
            series = indicator_series(g, a, StatePartition.from_working(working, 4), [t])
            assert abs(series.tmr[0] - reference) < 1e-12


@given(models())
def test_continuity_under_refinement(model):
    g, a, part = model
    moduli = []
    for n in (11, 41, 161):
        rof = indicator_series(g, a, part, np.linspace(0, 2, n)).rof
        moduli.append(np.max(np.abs(np.diff(rof))))
    assert moduli[0] >= moduli[1] - 1e-12 and moduli[1] >= moduli[2] - 1e-12
    # modulus is bounded by spacing times the derivative bound |a Q^2 qbar|
    bound = 2 / 160 * np.abs(g.rates).max() ** 2 * g.size**2
    assert moduli[2] <= bound + 1e-12


@given(models(irreducible_generators()))
def test_cut_balance(model):
    g, _, part = model
    asym = asymptotic_indicators(g, part)
    assert abs(asym.rof_inf - asym.ror_inf) < 1e-10
    assert abs(asym.tmr_inf - asym.rof_inf - asym.ror_inf - asym.roi_inf) < 1e-10


@given(models(irreducible_generators()))
def test_series_reaches_asymptotics(model):
    g, a, part = model
    t = 200 / spectral_gap(g)
    series = indicator_series(g, a, part, [t])
    asym = asymptotic_indicators(g, part)
    for name in ("rof", "ror", "roi", "tmr"):
        assert abs(getattr(series, name)[0] - getattr(asym, name + "_inf")) < 1e-6


@st.composite
def moderate_generators(draw):
    s = draw(st.integers(2, 6))
    off = draw(st.lists(st.floats(0.01, 1.0), min_size=s * s, max_size=s * s))
    q = np.array(off).reshape(s, s)
    np.fill_diagonal(q, 0.0)
    q *= min(1.0, 2.0 / q.sum(axis=1).max())
    np.fill_diagonal(q, -q.sum(axis=1))
    return Generator(q)


@given(moderate_generators(), st.sampled_from([0.5, 1.0]))
def test_embedding_round_trip(g, dt):
    res = embed_generator(scipy.linalg.expm(g.rates * dt), dt)
    assert np.max(np.abs(res.generator.rates - g.rates)) < 1e-8
    assert res.negativity_mass == 0.0


@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=16))
def test_projection_always_valid(entries):
    s = int(np.sqrt(len(entries)))
    assume(s >= 2)
    p = np.array(entries[: s * s]).reshape(s, s) + np.eye(s) * 2
    p /= p.sum(axis=1, keepdims=True)
    q = embed_generator(p, 1.0).generator.rates
    off = ~np.eye(s, dtype=bool)
    assert np.all(q[off] >= 0)
    assert np.all(q.sum(axis=1) == 0) or np.max(np.abs(q.sum(axis=1))) < 1e-15


@given(st.floats(0.5, 20.0), st.floats(0.5, 6.0), st.integers(0, 2**31))
def test_mle_is_stationary(lam, k, seed):
    x = lam * np.random.default_rng(seed).weibull(k, 2000)
    w = weibull_mle(x)
    z = (x / w.scale_lambda) ** w.shape_k
    dlam = w.shape_k / w.scale_lambda * (z.sum() - x.size)
    dk = x.size / w.shape_k + np.sum(np.log(x / w.scale_lambda) * (1 - z))
    assert abs(dlam) < 1e-6 * x.size
    assert abs(dk) < 1e-6 * x.size
    assert weibull_loglik(x, w.scale_lambda, w.shape_k) >= weibull_loglik(x, lam, k)


@given(st.lists(st.floats(0.0, 40.0), min_size=1, max_size=200))
def test_discretize_in_range(values):
    states = discretize(values, BinningScheme())
    assert states.min() >= 0 and states.max() <= 10
    edges = BinningScheme().edges()
    for v, s in zip(values, states):
        assert edges[s] <= v + 1e-8


@given(st.lists(st.integers(0, 4), max_size=100), st.sets(st.integers(1, 99)))
def test_counts_respect_breaks(states, breaks):
    c = count_transitions(states, breaks, num_states=5)
    pairs = max(len(states) - 1, 0)
    assert c.counts.sum() == pairs - len([b for b in breaks if b < len(states)])
