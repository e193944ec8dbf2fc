"""Convex objectives ``F(mu) = sum_n f_n(mu_n)`` over occupancy measures.

Every objective here evaluates on arrays ``(..., N, X, A)`` and keeps each
per-step term ``f_n`` inside ``[0, 1]`` by construction.
"""
from __future__ import annotations

import numpy as np

from .mdp import MdpShape, as_generator, induce_occupancy, random_kernel, random_policy

SMOOTHING = 1e-9

KINDS = ("iid-random-linear", "sign-flipping-linear", "drifting-target-imitation")


def _xlogx(mu: np.ndarray, eps: float) -> np.ndarray:
    return mu * np.log(np.maximum(mu, eps))


def _xlogx_grad(mu: np.ndarray, eps: float) -> np.ndarray:
    return np.log(np.maximum(mu, eps)) + (mu >= eps)


class CurlObjective:
    """Base class; subclasses implement :meth:`step_values` and :meth:`grad`.

    ``lipschitz`` bounds the per-step gradient sup-norm, so that
    ``|F(mu) - F(mu')| <= lipschitz * sum_n ||mu_n - mu'_n||_1``.
    """

    kind: str = "abstract"
    lipschitz: float = 0.0

    def step_values(self, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, mu: np.ndarray) -> np.ndarray | float:
        out = self.step_values(mu).sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = value

    @property
    def is_linear(self) -> bool:
        return False


class LinearObjective(CurlObjective):
    kind = "linear"

    def __init__(self, loss: np.ndarray):
        loss = np.array(loss, dtype=float)
        if loss.ndim != 3:
            raise ValueError("loss must be an (N, X, A) array")
        if np.any(loss < 0) or np.any(loss > 1) or not np.all(np.isfinite(loss)):
            raise ValueError("linear losses must lie in [0, 1]")
        loss.setflags(write=False)
        self.loss = loss
        self.lipschitz = float(np.max(np.abs(loss))) if loss.size else 0.0

    @property
    def is_linear(self) -> bool:
        return True

    def step_values(self, mu):
        return np.einsum("...nxa,nxa->...n", np.asarray(mu, dtype=float), self.loss)

    def grad(self, mu=None):
        if mu is None:
            return self.loss
        return np.broadcast_to(self.loss, np.shape(mu))


def linear_objective(loss: np.ndarray) -> LinearObjective:
    return LinearObjective(loss)


class EntropyObjective(CurlObjective):
    """Negative entropy per step, shifted and rescaled so uniform -> 0 and a point mass -> 1."""

    kind = "entropy"

    def __init__(self, shape: MdpShape, smoothing: float = SMOOTHING):
        self.shape = shape
        self.smoothing = smoothing
        self.scale = np.log(shape.num_states * shape.num_actions)
        if self.scale > 0:
            self.lipschitz = max(1.0, -np.log(smoothing)) / self.scale
        else:
            self.lipschitz = 0.0

    def step_values(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.scale == 0:
            return np.zeros(mu.shape[:-2])
        neg_ent = _xlogx(mu, self.smoothing).sum(axis=(-2, -1))
        return 1.0 + neg_ent / self.scale

    def grad(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.scale == 0:
            return np.zeros_like(mu)
        return _xlogx_grad(mu, self.smoothing) / self.scale


def entropy_objective(shape: MdpShape, smoothing: float = SMOOTHING) -> EntropyObjective:
    return EntropyObjective(shape, smoothing)


class ImitationObjective(CurlObjective):
    """``KL(mu_n | target_n)`` per step, divided by its largest attainable value.

    The target is smoothed to ``(target + eps) / (1 + |X||A| eps)``; the cap
    ``-log min target_n`` bounds the divergence over the whole simplex, so the
    division keeps ``f_n`` convex and inside ``[0, 1]``.
    """

    kind = "bregman-imitation"

    def __init__(self, target: np.ndarray, smoothing: float = SMOOTHING):
        target = np.asarray(target, dtype=float)
        if target.ndim != 3:
            raise ValueError("target must be an (N, X, A) occupancy")
        self.smoothing = smoothing
        self.target = target
        cells = target.shape[1] * target.shape[2]
        self.reference = (target + smoothing) / (1.0 + cells * smoothing)
        self.log_ref = np.log(self.reference)
        cap = -self.log_ref.reshape(target.shape[0], -1).min(axis=1)
        self.cap = np.where(cap > 0, cap, 1.0)
        top = max(1.0, -np.log(smoothing)) + cap
        self.lipschitz = float(np.max(top / self.cap))

    def divergence(self, mu):
        """Unscaled per-step ``KL(mu_n | target_n)`` with the clamped ``x log x``."""
        mu = np.asarray(mu, dtype=float)
        return (_xlogx(mu, self.smoothing) - mu * self.log_ref).sum(axis=(-2, -1))

    def step_values(self, mu):
        return self.divergence(mu) / self.cap

    def grad(self, mu):
        mu = np.asarray(mu, dtype=float)
        return (_xlogx_grad(mu, self.smoothing) - self.log_ref) / self.cap[:, None, None]


def imitation_objective(target: np.ndarray, smoothing: float = SMOOTHING) -> ImitationObjective:
    return ImitationObjective(target, smoothing)


class SumObjective(CurlObjective):
    """Sum of objectives; used by comparators that optimise over a whole interval."""

    kind = "sum"

    def __init__(self, parts):
        self.parts = list(parts)
        if not self.parts:
            raise ValueError("empty objective sum")
        self.lipschitz = float(sum(p.lipschitz for p in self.parts))

    @property
    def is_linear(self) -> bool:
        return all(p.is_linear for p in self.parts)

    def step_values(self, mu):
        return sum(p.step_values(mu) for p in self.parts)

    def grad(self, mu):
        return sum(p.grad(mu) for p in self.parts)


def zigzag_path(T: int, step: float) -> np.ndarray:
    """Path in [0, 1] starting at 0 whose consecutive moves all have length ``step``."""
    w = np.zeros(T)
    direction = 1.0
    for t in range(1, T):
        nxt = w[t - 1] + direction * step
        if nxt > 1.0 or nxt < 0.0:
            direction = -direction
            nxt = w[t - 1] + direction * step
        w[t] = nxt
    return w


def drifting_target_policies(shape: MdpShape, T: int, budget: float, rng) -> np.ndarray:
    """Target policies whose variation ``1 + sum_t max ||pi^t - pi^{t+1}||_1`` equals ``budget``."""
    rng = as_generator(rng)
    if budget < 1:
        raise ValueError("policy variation budget must be >= 1")
    start = random_policy(shape, rng)
    end = random_policy(shape, rng)
    spread = float(np.abs(start - end).sum(axis=-1).max())
    drift = budget - 1.0
    if T < 2 or drift == 0.0:
        return np.broadcast_to(start, (T,) + start.shape).copy()
    step = drift / ((T - 1) * spread)
    if step > 1.0:
        raise ValueError(f"budget {budget} exceeds the largest drift reachable in {T} episodes")
    w = zigzag_path(T, step)
    return (1.0 - w)[:, None, None, None] * start + w[:, None, None, None] * end


def adversarial_sequence(kind: str, T: int, rng_seed, shape: MdpShape, *, period: int = 1,
                         base_loss: np.ndarray | None = None, kernel: np.ndarray | None = None,
                         budget: float = 1.0, smoothing: float = SMOOTHING) -> list[CurlObjective]:
    """Oblivious adversary: the whole sequence is fixed up front from the seed.

    kinds
        ``iid-random-linear``: fresh uniform losses each episode.
        ``sign-flipping-linear``: ``base`` and ``1 - base`` alternating every ``period`` episodes.
        ``drifting-target-imitation``: imitation of a target whose policy drifts by ``budget``;
        ``kernel`` (one ``(N, X, A, X)`` array or one per episode) induces the targets.
    """
    rng = as_generator(rng_seed)
    if T < 1:
        raise ValueError("T must be positive")
    if kind == "iid-random-linear":
        losses = rng.random((T,) + shape.policy_shape)
        return [LinearObjective(l) for l in losses]
    if kind == "sign-flipping-linear":
        if period < 1:
            raise ValueError("period must be >= 1")
        base = rng.random(shape.policy_shape) if base_loss is None else np.asarray(base_loss, float)
        flipped = 1.0 - base
        return [LinearObjective(base if (t // period) % 2 == 0 else flipped) for t in range(T)]
    if kind == "drifting-target-imitation":
        if kernel is None:
            kernel = random_kernel(shape, rng)
        kernel = np.asarray(kernel, dtype=float)
        policies = drifting_target_policies(shape, T, budget, rng)
        kernels = kernel if kernel.ndim == 5 else np.broadcast_to(kernel, (T,) + kernel.shape)
        targets = induce_occupancy(policies, kernels, shape)
        return [ImitationObjective(target, smoothing) for target in targets]
    raise ValueError(f"unknown adversary kind {kind!r}; expected one of {KINDS}")
