"""Episodic loop-free MDPs: shapes, noise-driven dynamics and occupancy measures.

Array conventions used throughout the package (``N`` steps, ``X`` states,
``A`` actions, ``E`` noise symbols):

* kernel      ``(N, X, A, X)``  ``kernel[n]`` moves ``mu_n`` to the state marginal of ``mu_{n+1}``
  (0-based ``n``; ``kernel[0]`` acts on the initial pair distribution ``mu_0``).
* policy      ``(N, X, A)``     ``policy[n]`` picks the action at step ``n + 1``.
* occupancy   ``(N, X, A)``     ``occ[n]`` is the state-action law at step ``n + 1``;
  the fixed ``mu_0`` lives on :class:`MdpShape`.

Leading batch dimensions are accepted wherever noted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

INPUT_TOL = 1e-12
DERIVED_TOL = 1e-8


class DimensionError(ValueError):
    """Arrays do not conform to the MDP shape."""


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_simplex_rows(arr: np.ndarray, tol: float, what: str) -> None:
    if np.any(arr < -tol):
        raise ValueError(f"{what} has negative entries")
    sums = arr.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{what} rows do not sum to 1 (max deviation {worst:.3e})")


@dataclass(frozen=True)
class MdpShape:
    num_states: int
    num_actions: int
    horizon: int
    initial_dist: np.ndarray = field(repr=False)

    def __post_init__(self):
        if min(self.num_states, self.num_actions, self.horizon) < 1:
            raise ValueError("num_states, num_actions and horizon must be positive")
        mu0 = np.asarray(self.initial_dist, dtype=float)
        if mu0.shape != (self.num_states, self.num_actions):
            raise DimensionError(
                f"initial_dist must have shape {(self.num_states, self.num_actions)}, got {mu0.shape}"
            )
        _check_simplex_rows(mu0.reshape(-1), INPUT_TOL, "initial_dist")
        mu0.setflags(write=False)
        object.__setattr__(self, "initial_dist", mu0)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int, horizon: int) -> "MdpShape":
        mu0 = np.full((num_states, num_actions), 1.0 / max(num_states * num_actions, 1))
        return cls(num_states, num_actions, horizon, mu0)

    @classmethod
    def from_state(cls, num_states: int, num_actions: int, horizon: int, state: int = 0) -> "MdpShape":
        """Start deterministically in ``state`` with a uniform step-0 action."""
        mu0 = np.zeros((num_states, num_actions))
        if 0 <= state < num_states:
            mu0[state] = 1.0 / max(num_actions, 1)
        return cls(num_states, num_actions, horizon, mu0)

    @property
    def kernel_shape(self) -> tuple[int, int, int, int]:
        return (self.horizon, self.num_states, self.num_actions, self.num_states)

    @property
    def policy_shape(self) -> tuple[int, int, int]:
        return (self.horizon, self.num_states, self.num_actions)

    occupancy_shape = policy_shape


def check_kernel(kernel: np.ndarray, shape: MdpShape, tol: float = INPUT_TOL) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=float)
    if kernel.shape[-4:] != shape.kernel_shape:
        raise DimensionError(f"kernel shape {kernel.shape} does not end with {shape.kernel_shape}")
    _check_simplex_rows(kernel, tol, "kernel")
    return kernel


def check_policy(policy: np.ndarray, shape: MdpShape, tol: float = INPUT_TOL) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape[-3:] != shape.policy_shape:
        raise DimensionError(f"policy shape {policy.shape} does not end with {shape.policy_shape}")
    _check_simplex_rows(policy, tol, "policy")
    return policy


def check_occupancy(occ: np.ndarray, shape: MdpShape, kernel: np.ndarray | None = None,
                    tol: float = DERIVED_TOL) -> np.ndarray:
    """Validate the simplex invariant and, given ``kernel``, the Bellman flow."""
    occ = np.asarray(occ, dtype=float)
    if occ.shape[-3:] != shape.occupancy_shape:
        raise DimensionError(f"occupancy shape {occ.shape} does not end with {shape.occupancy_shape}")
    if np.any(occ < -tol):
        raise ValueError("occupancy has negative entries")
    flat = occ.reshape(occ.shape[:-2] + (-1,))
    if not np.allclose(flat.sum(-1), 1.0, rtol=0.0, atol=tol):
        raise ValueError("occupancy steps do not sum to 1")
    if kernel is not None and flow_violation(occ, kernel, shape) > tol:
        raise ValueError("occupancy violates the Bellman flow")
    return occ


def flow_violation(occ: np.ndarray, kernel: np.ndarray, shape: MdpShape) -> float:
    """Largest absolute residual of the Bellman-flow constraints."""
    occ = np.asarray(occ, dtype=float)
    prev = np.concatenate(
        [np.broadcast_to(shape.initial_dist, occ.shape[:-3] + (1,) + occ.shape[-2:]), occ[..., :-1, :, :]],
        axis=-3,
    )
    inflow = np.einsum("...nxa,...nxay->...ny", prev, kernel)
    return float(np.max(np.abs(occ.sum(-1) - inflow)))


def induce_occupancy(policy: np.ndarray, kernel: np.ndarray, shape: MdpShape) -> np.ndarray:
    """Forward recursion ``mu_n(x, a) = sum mu_{n-1}(x', a') p_n(x | x', a') pi_n(a | x)``.

    ``policy`` may carry leading batch dims; ``kernel`` either shares them or
    is a single ``(N, X, A, X)`` array broadcast across the batch.
    """
    policy = np.asarray(policy, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if policy.shape[-3:] != shape.policy_shape:
        raise DimensionError(f"policy shape {policy.shape} does not end with {shape.policy_shape}")
    if kernel.shape[-4:] != shape.kernel_shape:
        raise DimensionError(f"kernel shape {kernel.shape} does not end with {shape.kernel_shape}")
    batch = np.broadcast_shapes(policy.shape[:-3], kernel.shape[:-4])
    occ = np.empty(batch + shape.occupancy_shape)
    prev = np.broadcast_to(shape.initial_dist, batch + shape.initial_dist.shape)
    for n in range(shape.horizon):
        rho = np.einsum("...xa,...xay->...y", prev, kernel[..., n, :, :, :])
        occ[..., n, :, :] = rho[..., :, None] * policy[..., n, :, :]
        prev = occ[..., n, :, :]
    return occ


def state_marginals(occ: np.ndarray) -> np.ndarray:
    return np.asarray(occ).sum(axis=-1)


def policy_from_occupancy(occ: np.ndarray) -> np.ndarray:
    """Normalise each state row; rows with zero state mass become uniform."""
    occ = np.asarray(occ, dtype=float)
    rho = occ.sum(axis=-1, keepdims=True)
    num_actions = occ.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        policy = np.where(rho > 0, occ / np.where(rho > 0, rho, 1.0), 1.0 / num_actions)
    return policy


def uniform_policy(shape: MdpShape) -> np.ndarray:
    return np.full(shape.policy_shape, 1.0 / shape.num_actions)


def random_policy(shape: MdpShape, rng) -> np.ndarray:
    rng = as_generator(rng)
    return rng.dirichlet(np.ones(shape.num_actions), size=shape.policy_shape[:-1])


def random_kernel(shape: MdpShape, rng, concentration: float = 1.0) -> np.ndarray:
    rng = as_generator(rng)
    return rng.dirichlet(np.full(shape.num_states, concentration), size=shape.kernel_shape[:-1])


def uniform_kernel(shape: MdpShape) -> np.ndarray:
    return np.full(shape.kernel_shape, 1.0 / shape.num_states)


# --------------------------------------------------------------------------- dynamics


@dataclass(frozen=True)
class NoiseDynamics:
    """``x_{n+1} = g_n(x_n, a_n, eps_n)`` with ``eps_n ~ noise_dist[n]``.

    ``successor`` tabulates the known deterministic map ``g`` as an integer
    array ``(N, X, A, E)``; ``noise_dist`` is the (unknown to the learner)
    per-step law over the finite noise alphabet, shape ``(N, E)``.
    """

    successor: np.ndarray
    noise_dist: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.successor)
        h = np.asarray(self.noise_dist, dtype=float)
        if g.ndim != 4 or not np.issubdtype(g.dtype, np.integer):
            raise DimensionError("successor must be an integer array (N, X, A, E)")
        if h.shape != (g.shape[0], g.shape[3]):
            raise DimensionError(f"noise_dist must have shape {(g.shape[0], g.shape[3])}, got {h.shape}")
        if g.min() < 0 or g.max() >= g.shape[1]:
            raise ValueError("successor maps outside the state space")
        _check_simplex_rows(h, INPUT_TOL, "noise_dist")
        g = g.copy()
        h = h.copy()
        g.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "successor", g)
        object.__setattr__(self, "noise_dist", h)

    @classmethod
    def from_function(cls, fn: Callable[[int, int, int, int], int], shape: MdpShape,
                      noise_dist: np.ndarray) -> "NoiseDynamics":
        """Tabulate ``fn(n, x, a, eps)`` over the finite grid."""
        noise_dist = np.asarray(noise_dist, dtype=float)
        E = noise_dist.shape[-1]
        g = np.empty((shape.horizon, shape.num_states, shape.num_actions, E), dtype=np.int64)
        for idx in np.ndindex(g.shape):
            g[idx] = fn(*idx)
        return cls(g, noise_dist)

    @property
    def num_noise(self) -> int:
        return self.successor.shape[3]

    def with_noise(self, noise_dist: np.ndarray) -> "NoiseDynamics":
        return NoiseDynamics(self.successor, noise_dist)

    def kernel(self) -> np.ndarray:
        return kernel_from_dynamics(self.successor, self.noise_dist)


def kernel_from_dynamics(successor: np.ndarray, noise_dist: np.ndarray) -> np.ndarray:
    """``p_{n+1}(x' | x, a) = P(g_n(x, a, eps) = x')``, enumerated over the alphabet.

    ``noise_dist`` may carry leading batch dims ``(..., N, E)``.
    """
    successor = np.asarray(successor)
    X = successor.shape[1]
    onehot = (successor[..., None] == np.arange(X)).astype(float)
    return np.einsum("nxaey,...ne->...nxay", onehot, np.asarray(noise_dist, dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """One episode: ``states``/``actions`` hold steps 0..N, ``noises`` the N draws."""

    states: np.ndarray
    actions: np.ndarray
    noises: np.ndarray
    episode: int = 0

    def replays(self, successor: np.ndarray) -> bool:
        g = np.asarray(successor)
        n = np.arange(len(self.noises))
        nxt = g[n, self.states[:-1], self.actions[:-1], self.noises]
        return bool(np.array_equal(nxt, self.states[1:]))


def _sample_index(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (u[..., None] >= cdf).sum(axis=-1)
    return np.minimum(idx, cdf.shape[-1] - 1)


def sample_episodes(policy: np.ndarray, dynamics: NoiseDynamics, shape: MdpShape,
                    num_episodes: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised roll-outs; returns ``(states, actions, noises)`` with a leading episode axis."""
    rng = as_generator(rng)
    N = shape.horizon
    g = dynamics.successor
    mu0_cdf = np.cumsum(shape.initial_dist.reshape(-1))
    noise_cdf = np.cumsum(dynamics.noise_dist, axis=-1)
    pol_cdf = np.cumsum(policy, axis=-1)
    states = np.empty((num_episodes, N + 1), dtype=np.int64)
    actions = np.empty((num_episodes, N + 1), dtype=np.int64)
    noises = np.empty((num_episodes, N), dtype=np.int64)
    first = _sample_index(mu0_cdf, rng.random(num_episodes))
    states[:, 0], actions[:, 0] = np.divmod(first, shape.num_actions)
    for n in range(N):
        noises[:, n] = _sample_index(noise_cdf[n], rng.random(num_episodes))
        states[:, n + 1] = g[n, states[:, n], actions[:, n], noises[:, n]]
        actions[:, n + 1] = _sample_index(pol_cdf[n, states[:, n + 1]], rng.random(num_episodes))
    return states, actions, noises


def sample_episode(policy: np.ndarray, dynamics: NoiseDynamics, shape: MdpShape, rng,
                   episode: int = 0) -> Trajectory:
    states, actions, noises = sample_episodes(policy, dynamics, shape, 1, rng)
    return Trajectory(states[0], actions[0], noises[0], episode)


def empirical_occupancy(states: np.ndarray, actions: np.ndarray, shape: MdpShape) -> np.ndarray:
    """Visit frequencies of steps 1..N from a batch of roll-outs."""
    occ = np.zeros(shape.occupancy_shape)
    for n in range(shape.horizon):
        np.add.at(occ[n], (states[:, n + 1], actions[:, n + 1]), 1.0)
    return occ / states.shape[0]


# --------------------------------------------------------------------------- non-stationarity


def kernel_variation(kernels: Sequence[np.ndarray]) -> tuple[float, int, np.ndarray]:
    """Return ``(delta_p, delta_p_inf, per_step)`` for a kernel sequence.

    ``per_step[t]`` is the largest row-wise L1 gap between episodes ``t`` and ``t + 1``.
    """
    kernels = np.asarray(kernels, dtype=float)
    if kernels.ndim != 5 or kernels.shape[0] == 0:
        raise ValueError("need a non-empty sequence of (N, X, A, X) kernels")
    diff = np.abs(np.diff(kernels, axis=0)).sum(axis=-1)
    per_step = diff.reshape(diff.shape[0], -1).max(axis=1) if diff.shape[0] else np.zeros(0)
    changes = sum(not np.array_equal(kernels[t], kernels[t + 1]) for t in range(len(kernels) - 1))
    return 1.0 + float(per_step.sum()), 1 + int(changes), per_step


def policy_variation_steps(policies: Sequence[np.ndarray]) -> np.ndarray:
    policies = np.asarray(policies, dtype=float)
    if policies.ndim != 4 or policies.shape[0] == 0:
        raise ValueError("need a non-empty sequence of (N, X, A) policies")
    diff = np.abs(np.diff(policies, axis=0)).sum(axis=-1)
    return diff.reshape(diff.shape[0], -1).max(axis=1) if diff.shape[0] else np.zeros(0)


def policy_variation(policies: Sequence[np.ndarray]) -> float:
    """``1 + sum_t max_{n,x} ||pi^t_n(.|x) - pi^{t+1}_n(.|x)||_1``."""
    return 1.0 + float(policy_variation_steps(policies).sum())


# --------------------------------------------------------------------------- perturbation bounds


def kernel_perturbation_bound(policy: np.ndarray, p: np.ndarray, q: np.ndarray,
                              shape: MdpShape) -> tuple[np.ndarray, np.ndarray]:
    """Per-step ``(lhs, rhs)`` of the occupancy bound under a kernel swap.

    ``lhs[n] = ||mu_n^{pi,p} - mu_n^{pi,q}||_1`` and ``rhs[n]`` accumulates
    ``sum_{x,a} mu_i^{pi,p}(x,a) ||p_{i+1}(.|x,a) - q_{i+1}(.|x,a)||_1`` over ``i < n``
    (``i = 0`` uses ``mu_0``).
    """
    mu_p = induce_occupancy(policy, p, shape)
    mu_q = induce_occupancy(policy, q, shape)
    lhs = np.abs(mu_p - mu_q).sum(axis=(-2, -1))
    prev = np.concatenate([shape.initial_dist[None], mu_p[:-1]], axis=0)
    row_gap = np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)
    rhs = np.cumsum((prev * row_gap).sum(axis=(-2, -1)))
    return lhs, rhs


def policy_perturbation_bound(policy: np.ndarray, other: np.ndarray, kernel: np.ndarray,
                              shape: MdpShape) -> tuple[np.ndarray, np.ndarray]:
    """Per-step ``(lhs, rhs)`` of the occupancy bound under a policy swap."""
    mu = induce_occupancy(policy, kernel, shape)
    mu_other = induce_occupancy(other, kernel, shape)
    lhs = np.abs(mu - mu_other).sum(axis=(-2, -1))
    rho = mu.sum(axis=-1)
    gap = np.abs(np.asarray(policy) - np.asarray(other)).sum(axis=-1)
    rhs = np.cumsum((rho * gap).sum(axis=-1))
    return lhs, rhs


def occupancy_l1_bound_check(policy: np.ndarray, p: np.ndarray, q: np.ndarray, shape: MdpShape,
                             slack: float = 1e-12) -> bool:
    lhs, rhs = kernel_perturbation_bound(policy, p, q, shape)
    return bool(np.all(lhs <= rhs + slack))


def occupancy_policy_bound_check(policy: np.ndarray, other: np.ndarray, kernel: np.ndarray,
                                 shape: MdpShape, slack: float = 1e-12) -> bool:
    lhs, rhs = policy_perturbation_bound(policy, other, kernel, shape)
    return bool(np.all(lhs <= rhs + slack))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``KL(p | q)`` over the last axis with the ``0 log 0 = 0`` convention."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p / q), 0.0)
    return terms.sum(axis=-1)


def inverse_pinsker_check(p: np.ndarray, q: np.ndarray, slack: float = 1e-12) -> bool:
    """Check ``KL(p~ | q~) <= 2 |X| ||p~ - q~||_1^2`` for the half-uniform smoothings."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    X = p.shape[-1]
    ps = 0.5 * (p + 1.0 / X)
    qs = 0.5 * (q + 1.0 / X)
    l1 = np.abs(ps - qs).sum(axis=-1)
    return bool(np.all(kl_divergence(ps, qs) <= 2 * X * l1**2 + slack))
