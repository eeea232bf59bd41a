"""Entropy estimation for exchangeable random partitions.

Plug-in and Bayesian posterior entropy estimators, samplers for the
two-parameter Poisson-Dirichlet family, and exact and Monte Carlo checks of
the posterior-entropy martingale.
"""

from .partition import (
    TAIL,
    PartitionCounts,
    PartitionPath,
    RankedMasses,
    TransitionDistribution,
    entropy_of_masses,
    plugin_additive,
    plugin_entropy,
    sample_class,
    simulate_partition,
    successors,
)
from .pdp import (
    PdpParams,
    PosteriorEntropyParts,
    crp_sample,
    crp_transition,
    expected_tail_entropy,
    posterior_entropy,
    posterior_sample,
    prior_mean_entropy,
    stick_breaking,
)
from .rng import RandomStream
from .special_fn import digamma, log_gamma
from .variates import beta_draw, dirichlet_draw, gamma_draw

__version__ = "0.1.0"
