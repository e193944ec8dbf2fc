"""Synthetic noise-driven environments with a controlled amount of kernel drift.

The successor map is fixed: for every ``(n, x, a)`` a random permutation of
the states, with one noise symbol per state. Only the noise law changes over
episodes, so the kernel row of ``(n, x, a)`` is the noise law permuted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import MdpShape, NoiseDynamics, as_generator, kernel_from_dynamics, kernel_variation
from ..objectives import zigzag_path
from .config import ConfigError, ExperimentConfig


@dataclass(frozen=True)
class Environment:
    """``noise[t]`` is the ``(N, E)`` noise law of episode ``t + 1``; ``piece[t]`` its stretch index."""

    shape: MdpShape
    successor: np.ndarray
    noise: np.ndarray
    piece: np.ndarray

    @property
    def episodes(self) -> int:
        return self.noise.shape[0]

    def dynamics(self, t: int) -> NoiseDynamics:
        """Dynamics of 0-based episode ``t``."""
        return NoiseDynamics(self.successor, self.noise[t])

    def kernel(self, t: int) -> np.ndarray:
        return kernel_from_dynamics(self.successor, self.noise[t])

    def kernels(self) -> np.ndarray:
        return kernel_from_dynamics(self.successor, self.noise)

    def piece_bounds(self) -> list[tuple[int, int]]:
        """Maximal runs of identical kernels as 0-based half-open ``(start, stop)`` ranges."""
        change = np.flatnonzero(np.diff(self.piece)) + 1
        starts = np.concatenate([[0], change])
        stops = np.concatenate([change, [self.episodes]])
        return [(int(a), int(b)) for a, b in zip(starts, stops)]

    def variation(self) -> tuple[float, int]:
        delta_p, delta_inf, _ = kernel_variation(self.kernels())
        return delta_p, delta_inf


def random_successor(shape: MdpShape, rng) -> np.ndarray:
    rng = as_generator(rng)
    N, X, A = shape.horizon, shape.num_states, shape.num_actions
    return np.stack([rng.permutation(X) for _ in range(N * X * A)]).reshape(N, X, A, X)


def _distinct_laws(count: int, shape: MdpShape, concentration: float, rng) -> list[np.ndarray]:
    laws = [rng.dirichlet(np.full(shape.num_states, concentration), size=shape.horizon)]
    while len(laws) < count:
        law = rng.dirichlet(np.full(shape.num_states, concentration), size=shape.horizon)
        if not np.array_equal(law, laws[-1]):
            laws.append(law)
    return laws


def generate_environment(config: ExperimentConfig, seed) -> Environment:
    """Draw an environment realising the configured non-stationarity.

    ``piecewise``: ``pieces`` stretches of equal length (the last absorbs the
    remainder), consecutive noise laws distinct, so ``Delta^p_inf = pieces``.
    ``drifting``: the noise law slides along a zigzag between two laws with a
    constant per-episode step, sized so that ``Delta^p = drift_budget``.
    """
    rng = as_generator(seed)
    shape = MdpShape.uniform(config.num_states, config.num_actions, config.horizon)
    T = config.episodes
    successor = random_successor(shape, rng)
    if config.environment == "piecewise":
        laws = _distinct_laws(config.pieces, shape, config.noise_concentration, rng)
        piece = np.minimum(np.arange(T) // config.piece_length, config.pieces - 1)
        noise = np.stack([laws[i] for i in piece])
        return Environment(shape, successor, noise, piece)
    start, end = _distinct_laws(2, shape, config.noise_concentration, rng)
    drift = config.drift_budget - 1.0
    if drift == 0.0:
        noise = np.broadcast_to(start, (T,) + start.shape).copy()
        return Environment(shape, successor, noise, np.zeros(T, dtype=np.int64))
    gap = np.abs(kernel_from_dynamics(successor, start) - kernel_from_dynamics(successor, end)).sum(-1).max()
    step = drift / ((T - 1) * gap)
    if step > 1.0:
        raise ConfigError(
            f"drift budget {config.drift_budget} is infeasible: at most {1 + (T - 1) * gap:.4g} is reachable"
        )
    w = zigzag_path(T, step)[:, None, None]
    noise = (1.0 - w) * start + w * end
    noise /= noise.sum(axis=-1, keepdims=True)
    return Environment(shape, successor, noise, np.arange(T))
