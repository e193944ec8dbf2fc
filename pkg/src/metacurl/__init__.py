"""Online convex RL in MDPs with drifting dynamics and adversarial convex objectives."""
from __future__ import annotations

from .mdp import (
    DimensionError,
    MdpShape,
    NoiseDynamics,
    Trajectory,
    induce_occupancy,
    kernel_from_dynamics,
    kernel_variation,
    policy_from_occupancy,
    policy_variation,
    sample_episode,
    sample_episodes,
)
from .objectives import (
    EntropyObjective,
    ImitationObjective,
    LinearObjective,
    SumObjective,
    adversarial_sequence,
)
from .lea import NumericalError, SleepingEWA, ewa_update, sleeping_wrap
from .estimator import KernelEstimator, StateError, extract_samples
from .greedy import BlackboxBank, DomainError, GreedyMDCurl, mirror_descent_step
from .meta import MetaCURL, learning_rate_grid

__all__ = [
    "BlackboxBank", "DimensionError", "DomainError", "EntropyObjective", "GreedyMDCurl",
    "ImitationObjective", "KernelEstimator", "LinearObjective", "MdpShape", "MetaCURL",
    "NoiseDynamics", "NumericalError", "SleepingEWA", "StateError", "SumObjective", "Trajectory",
    "adversarial_sequence", "ewa_update", "extract_samples", "induce_occupancy",
    "kernel_from_dynamics", "kernel_variation", "learning_rate_grid", "mirror_descent_step",
    "policy_from_occupancy", "policy_variation", "sample_episode", "sample_episodes", "sleeping_wrap",
]
