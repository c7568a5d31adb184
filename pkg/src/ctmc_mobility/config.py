"""Default numerical tolerances, gathered in one place."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    generator: float = 1e-10      # off-diagonal sign and row-sum checks
    probability: float = 1e-12    # distribution sums
    stochastic: float = 1e-10     # transition-matrix row sums
    expm: float = 1e-12           # Poisson tail weight in uniformization
    stationary: float = 1e-10     # residual of L Q = 0
    logm_max_roots: int = 64
    mle: float = 1e-10
    mle_max_iters: int = 100


DEFAULT_TOLERANCES = Tolerances()
