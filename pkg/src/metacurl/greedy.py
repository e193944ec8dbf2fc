"""Greedy MD-CURL: mirror descent on occupancy measures with a policy-space KL regulariser.

The mirror step

    mu^{t+1} = argmin_{mu in M(p_hat)} lam <grad, mu> + Gamma(mu, mu_tilde)

is solved by a soft backward recursion: with ``V_{N+1} = 0``,

    pi_n(a|x) ∝ pi_tilde_n(a|x) exp(-lam grad_n(x,a) - sum_x' p_hat(x'|x,a) V_{n+1}(x'))
    V_n(x)    = -log sum_a pi_tilde_n(a|x) exp(...)

All functions accept leading batch dimensions so that a pool of instances can
be advanced in one call.
"""
from __future__ import annotations

import numpy as np

from .lea import NumericalError
from .mdp import MdpShape, Trajectory, induce_occupancy, policy_from_occupancy, uniform_policy
from . import _compiled
from .estimator import SampleCounts, extract_samples


class DomainError(ValueError):
    """The reference policy vanishes where the occupancy has mass."""


def bregman_gamma(mu: np.ndarray, mu_ref: np.ndarray, ref_policy: np.ndarray | None = None) -> float:
    """``sum_n E_{mu_n}[log(pi_n(a|x) / pi'_n(a|x))]`` with policies read off the occupancies.

    Pass ``ref_policy`` to supply ``pi'`` directly (needed when ``mu_ref`` has
    unreached states whose policy matters).
    """
    mu = np.asarray(mu, dtype=float)
    pi = policy_from_occupancy(mu)
    ref = policy_from_occupancy(mu_ref) if ref_policy is None else np.asarray(ref_policy, dtype=float)
    mass = mu > 0
    if np.any(mass & (ref <= 0)):
        raise DomainError("reference policy is zero on a pair the occupancy visits")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mass, mu * (np.log(np.where(mass, pi, 1.0)) - np.log(np.where(mass, ref, 1.0))), 0.0)
    return float(terms.sum())


def mirror_policy(ref_policy: np.ndarray, gradient: np.ndarray, kernel: np.ndarray, lam) -> np.ndarray:
    """Policy of the mirror-descent minimiser; see the module docstring.

    ``ref_policy``/``gradient`` are ``(..., N, X, A)``, ``kernel`` is
    ``(..., N, X, A, X)`` and ``lam`` broadcasts against the batch dims.
    """
    ref_policy = np.asarray(ref_policy, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    N = ref_policy.shape[-3]
    batch = np.broadcast_shapes(ref_policy.shape[:-3], gradient.shape[:-3], kernel.shape[:-4], np.shape(lam))
    lam = np.broadcast_to(np.asarray(lam, dtype=float), batch)[..., None, None]
    if not np.all(np.isfinite(gradient)):
        raise NumericalError("non-finite gradient")
    with np.errstate(divide="ignore"):
        log_ref = np.log(ref_policy)
    out = np.empty(batch + ref_policy.shape[-3:])
    value = None
    for n in range(N - 1, -1, -1):
        cost = lam * gradient[..., n, :, :]
        if value is not None:
            cost = cost + np.einsum("...xay,...y->...xa", kernel[..., n + 1, :, :, :], value)
        logits = log_ref[..., n, :, :] - cost
        top = logits.max(axis=-1, keepdims=True)
        if not np.all(np.isfinite(top)):
            raise NumericalError("mirror step overflowed")
        shifted = np.exp(logits - top)
        norm = shifted.sum(axis=-1, keepdims=True)
        out[..., n, :, :] = shifted / norm
        value = -(np.log(norm) + top)[..., 0]
    return out


def mirror_descent_step(ref_policy: np.ndarray, gradient: np.ndarray, kernel: np.ndarray, lam,
                        shape: MdpShape) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(occupancy, policy)`` of the regularised minimiser over ``M(kernel)``."""
    policy = mirror_policy(ref_policy, gradient, kernel, lam)
    return induce_occupancy(policy, kernel, shape), policy


def mirror_objective(mu: np.ndarray, gradient: np.ndarray, ref_policy: np.ndarray, lam: float) -> float:
    """``lam <gradient, mu> + Gamma(mu, mu^{ref})``, the quantity the mirror step minimises."""
    return float(lam * np.sum(gradient * mu)) + bregman_gamma(mu, None, ref_policy=ref_policy)


def mix_uniform(policy: np.ndarray, alpha) -> np.ndarray:
    """``(1 - alpha) pi + alpha / |A|``; ``alpha`` broadcasts against the batch dims."""
    policy = np.asarray(policy, dtype=float)
    alpha = np.asarray(alpha, dtype=float)[..., None, None, None]
    return (1.0 - alpha) * policy + alpha / policy.shape[-1]


class GreedyMDCurl:
    """One black-box instance, born at episode ``birth`` with learning rate ``lam``.

    It keeps its own empirical kernel (uniform before any data) and mixes each
    new policy with the uniform one at rate ``alpha = 1 / (local episode)``.
    """

    def __init__(self, shape: MdpShape, successor: np.ndarray, lam: float, birth: int = 1,
                 initial_policy: np.ndarray | None = None):
        if lam < 0:
            raise ValueError("learning rate must be nonnegative")
        self.shape = shape
        self.successor = np.asarray(successor)
        self.lam = float(lam)
        self.birth = birth
        self.policy = uniform_policy(shape) if initial_policy is None else np.array(initial_policy, float)
        self.mixed = self.policy.copy()
        self.counts = np.zeros(shape.kernel_shape)
        self.kernel = np.full(shape.kernel_shape, 1.0 / shape.num_states)
        self.mixed_occupancy = induce_occupancy(self.mixed, self.kernel, shape)
        self.episodes = 0

    @property
    def alpha(self) -> float:
        return 1.0 / (self.episodes + 1)

    def model_occupancy(self, kernel: np.ndarray | None = None) -> np.ndarray:
        """``mu^{pi^t, p_hat^t}``, the occupancy the instance believes it induces."""
        return induce_occupancy(self.policy, self.kernel if kernel is None else kernel, self.shape)

    def update_kernel(self, samples: np.ndarray) -> np.ndarray:
        onehot = samples[..., None] == np.arange(self.shape.num_states)
        self.counts += onehot
        self.episodes += 1
        self.kernel = self.counts / self.episodes
        return self.kernel

    def episode(self, objective, traj: Trajectory | None = None, samples: np.ndarray | None = None,
                kernel_override: np.ndarray | None = None) -> np.ndarray:
        """Advance one episode and return the policy for the next one.

        ``objective`` is the revealed objective (anything with ``grad``) or a
        gradient array already evaluated at the instance's model occupancy.
        ``kernel_override`` replaces the instance's own estimate, for sharing
        an external estimator.
        """
        if hasattr(objective, "grad"):
            gradient = objective.grad(self.model_occupancy())
        else:
            gradient = np.asarray(objective, dtype=float)
        if samples is None:
            if traj is None:
                raise ValueError("need a trajectory or per-cell samples")
            samples = extract_samples(traj, self.successor)
        self.update_kernel(samples)
        if kernel_override is not None:
            self.kernel = np.asarray(kernel_override, dtype=float)
        self.policy = mirror_policy(self.mixed, gradient, self.kernel, self.lam)
        self.mixed = mix_uniform(self.policy, self.alpha)
        self.mixed_occupancy = induce_occupancy(self.mixed, self.kernel, self.shape)
        return self.policy


class BlackboxBank:
    """A cohort grid of instances laid out as ``(birth, rate)`` and advanced together.

    Birth ``b`` instances read their kernel as the empirical law of the shared
    samples over ``[b, t]``; this is exactly what a standalone
    :class:`GreedyMDCurl` born at ``b`` would hold, since every instance
    observes the same noise. ``backend="numpy"`` runs the vectorised reference
    path instead of the compiled loops.
    """

    def __init__(self, shape: MdpShape, rates: np.ndarray, capacity: int = 16, backend: str = "compiled"):
        if backend not in ("compiled", "numpy"):
            raise ValueError(f"unknown backend {backend!r}")
        self.shape = shape
        self.backend = backend
        self.rates = np.ascontiguousarray(rates, dtype=float)
        L = len(self.rates)
        self.births = np.zeros(max(capacity, 1), dtype=np.int64)
        self.policy = np.empty((max(capacity, 1), L) + shape.policy_shape)
        self.mixed = np.empty_like(self.policy)
        self.size = 0

    def _grow(self, need: int) -> None:
        if need <= len(self.births):
            return
        size = max(need, 2 * len(self.births))
        births = np.zeros(size, dtype=np.int64)
        births[: self.size] = self.births[: self.size]
        policy = np.empty((size,) + self.policy.shape[1:])
        mixed = np.empty_like(policy)
        policy[: self.size] = self.policy[: self.size]
        mixed[: self.size] = self.mixed[: self.size]
        self.births, self.policy, self.mixed = births, policy, mixed

    def spawn(self, birth: int) -> None:
        self._grow(self.size + 1)
        self.births[self.size] = birth
        self.policy[self.size] = uniform_policy(self.shape)
        self.mixed[self.size] = self.policy[self.size]
        self.size += 1

    def policies(self, rows=slice(None)) -> np.ndarray:
        return self.policy[: self.size][rows]

    def kernels(self, counts: SampleCounts, t_done: int, rows=slice(None)) -> np.ndarray:
        """Each cohort's empirical kernel after ``t_done`` episodes, shaped ``(B, N, X, A, X)``."""
        births = self.births[: self.size][rows]
        if self.backend == "numpy":
            return counts.empirical(births, t_done)
        out = np.empty((len(births),) + self.shape.kernel_shape)
        _compiled.windowed_kernels(counts.raw, births, t_done, self.shape.num_states, out)
        return out

    def occupancies(self, kernel: np.ndarray, rows=slice(None)) -> np.ndarray:
        """Occupancies ``(B, L, N, X, A)`` under one shared kernel or one kernel per cohort ``(B, ...)``."""
        policy = self.policies(rows)
        kernel = np.asarray(kernel, dtype=float)
        if self.backend == "numpy":
            if kernel.ndim == 5:
                kernel = kernel[:, None]
            return induce_occupancy(policy, kernel, self.shape)
        if kernel.ndim == 4:
            kernel = kernel[None]
        out = np.empty(policy.shape)
        _compiled.induce_pool(policy, np.ascontiguousarray(kernel), self.shape.initial_dist, out)
        return out

    def advance(self, gradient: np.ndarray, counts: SampleCounts, t_done: int, rows=slice(None),
                kernel: np.ndarray | None = None) -> None:
        """Mirror step for the selected cohorts after episode ``t_done`` has been recorded.

        ``gradient`` broadcasts to ``(B, L, N, X, A)``. A ``kernel`` given here
        replaces every cohort's own empirical kernel.
        """
        births = self.births[: self.size][rows]
        kernels = self.kernels(counts, t_done, rows) if kernel is None else np.asarray(kernel, float)[None]
        alpha = 1.0 / (t_done - births + 2.0)
        policy = self.policy[: self.size][rows]
        mixed = self.mixed[: self.size][rows]
        if self.backend == "numpy":
            new = mirror_policy(mixed, gradient, kernels[:, None], self.rates[None, :])
            policy[...] = new
            mixed[...] = mix_uniform(new, alpha[:, None])
            return
        grad = np.asarray(gradient, dtype=float)
        grad = grad.reshape((1,) * (5 - grad.ndim) + grad.shape)
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient")
        _compiled.mirror_pool(mixed, np.ascontiguousarray(grad), np.ascontiguousarray(kernels), self.rates,
                              alpha, policy, mixed)
