import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctmc_mobility import Generator, InitialDistribution, StatePartition

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

TWO_STATE = [[-1.0, 1.0], [2.0, -2.0]]
THREE_STATE = [[-2.0, 1.0, 1.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]]


@pytest.fixture
def two_state():
    return Generator(np.array(TWO_STATE))


@pytest.fixture
def three_state():
    return Generator(np.array(THREE_STATE))


def random_generator(rng, size, max_rate=1.0, density=1.0):
    """Off-diagonal rates uniform on [0, max_rate), zeroed with prob 1 - density."""
    q = rng.uniform(0.0, max_rate, (size, size))
    q *= rng.random((size, size)) < density
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return Generator(q)


def random_distribution(rng, size):
    return InitialDistribution(rng.dirichlet(np.ones(size)))


def random_partition(rng, size):
    k = int(rng.integers(1, size))
    working = rng.choice(size, k, replace=False)
    return StatePartition.from_working(working, size)


@st.composite
def generators(draw, min_size=2, max_size=6, max_rate=3.0):
    s = draw(st.integers(min_size, max_size))
    off = draw(arrays(np.float64, (s, s), elements=st.floats(0.0, max_rate)))
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return Generator(off)


@st.composite
def irreducible_generators(draw, min_size=2, max_size=6):
    """All off-diagonal rates strictly positive, hence irreducible."""
    s = draw(st.integers(min_size, max_size))
    off = draw(arrays(np.float64, (s, s), elements=st.floats(0.05, 2.0)))
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return Generator(off)


@st.composite
def models(draw, generator_strategy=None):
    """(generator, initial distribution, partition) triples."""
    g = draw(generators() if generator_strategy is None else generator_strategy)
    s = g.size
    weights = draw(arrays(np.float64, s, elements=st.floats(0.0, 1.0)))
    weights[draw(st.integers(0, s - 1))] += 1.0
    a = InitialDistribution(weights / weights.sum())
    mask = draw(arrays(np.bool_, s))
    mask[0], mask[-1] = True, False
    part = StatePartition.from_working(np.flatnonzero(mask), s)
    return g, a, part


# acceptance results are collected here and echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
