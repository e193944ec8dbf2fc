"""Online estimation of a drifting transition kernel from observed external noise.

For every cell ``(n, x, a)`` a layer of sleeping experts is kept, one per
birth episode ``s``; expert ``s`` predicts the empirical law of the
counterfactual next states seen since ``s``. Their predictions are aggregated
by EWA (``eta = 1``) under the smoothed log loss, which is 1-exp-concave.
"""
from __future__ import annotations

import math

import numpy as np

from . import _compiled
from .lea import logsumexp
from .mdp import MdpShape, Trajectory, as_generator


class StateError(RuntimeError):
    """An object was used before the data it needs was recorded."""


def extract_samples(traj: Trajectory, successor: np.ndarray) -> np.ndarray:
    """Counterfactual next state of every ``(n, x, a)`` under the episode's observed noise.

    ``samples[n, x, a] = g_n(x, a, eps_n)``: one draw from ``kernel[n](.|x, a)``.
    """
    successor = np.asarray(successor)
    noises = getattr(traj, "noises", None)
    if noises is None or len(noises) != successor.shape[0]:
        raise StateError("trajectory carries no complete noise record")
    n = np.arange(successor.shape[0])
    return successor[n, :, :, np.asarray(noises)].copy()


def smoothed_sample(true_next: np.ndarray, num_states: int, rng) -> np.ndarray:
    """Keep each sample with probability 1/2, otherwise redraw it uniformly over the states."""
    rng = as_generator(rng)
    true_next = np.asarray(true_next)
    keep = rng.random(true_next.shape) < 0.5
    uniform = rng.integers(num_states, size=true_next.shape)
    return np.where(keep, true_next, uniform)


def smoothed_log_loss(q: np.ndarray, observed) -> np.ndarray | float:
    """``-log(q(x~) + 1/|X|)``; ``q`` has the state axis last, ``observed`` indexes it."""
    q = np.asarray(q, dtype=float)
    observed = np.asarray(observed)
    X = q.shape[-1]
    picked = np.take_along_axis(q, observed[..., None], axis=-1)[..., 0]
    out = -np.log(picked + 1.0 / X)
    return float(out) if out.ndim == 0 else out


class SampleCounts:
    """Cumulative one-hot counts of the per-cell samples, one snapshot per episode.

    ``window(s, t)`` returns the integer counts of episodes ``s..t`` (1-based,
    inclusive) as a difference of two snapshots.
    """

    def __init__(self, shape: MdpShape, capacity: int = 16):
        self.shape = shape
        self.cells = shape.kernel_shape
        self._cum = np.zeros((max(capacity, 1) + 1,) + self.cells)
        self._samples: list[np.ndarray] = []
        self.episodes = 0

    def append(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples)
        t = self.episodes + 1
        if t + 1 > len(self._cum):
            grown = np.zeros((2 * len(self._cum),) + self.cells)
            grown[: len(self._cum)] = self._cum
            self._cum = grown
        onehot = samples[..., None] == np.arange(self.shape.num_states)
        self._cum[t] = self._cum[t - 1] + onehot
        self._samples.append(samples.copy())
        self.episodes = t

    @property
    def raw(self) -> np.ndarray:
        """The snapshot buffer; row ``t`` holds the counts of episodes ``1..t``."""
        return self._cum

    @property
    def samples(self) -> np.ndarray:
        return np.array(self._samples)

    def cumulative(self, t: int) -> np.ndarray:
        return self._cum[t]

    def window(self, s: int, t: int) -> np.ndarray:
        if not 1 <= s <= t <= self.episodes:
            raise StateError(f"window [{s}, {t}] outside recorded episodes 1..{self.episodes}")
        return self._cum[t] - self._cum[s - 1]

    def empirical(self, births: np.ndarray, t: int) -> np.ndarray:
        """Empirical kernels over ``[s, t]`` for every birth ``s`` in ``births`` (uniform if ``s > t``)."""
        births = np.asarray(births)
        out = np.empty(births.shape + self.cells)
        fresh = births > t
        out[fresh] = 1.0 / self.shape.num_states
        seen = ~fresh
        if seen.any():
            b = births[seen]
            counts = self._cum[t] - self._cum[b - 1]
            out[seen] = counts / (t - b + 1).reshape((-1,) + (1,) * len(self.cells))
        return out


class KernelEstimator:
    """Sleeping EWA over birth-time windowed empirical estimators, per cell.

    Order of one :meth:`step` after episode ``t``:

    1. score the experts born at ``1..t-1`` on the predictions they issued for
       episode ``t`` (data ``s..t-1``), with the smoothed sample, and update
       their weights by EWA;
    2. add the raw samples of episode ``t`` to every window;
    3. give birth to expert ``t`` with weight ``1/t``, scaling older weights by ``(t-1)/t``;
    4. aggregate into the estimate used for episode ``t + 1``.

    The estimate for episode 1 is uniform. ``backend="numpy"`` runs the
    vectorised reference path instead of the compiled loops.
    """

    eta = 1.0

    def __init__(self, shape: MdpShape, successor: np.ndarray, rng=None, capacity: int = 16,
                 record: bool = False, backend: str = "compiled"):
        if backend not in ("compiled", "numpy"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self.shape = shape
        self.successor = np.asarray(successor)
        self.rng = as_generator(rng)
        self.counts = SampleCounts(shape, capacity)
        self._logw = np.full((max(capacity, 1),) + shape.kernel_shape[:-1], -np.inf)
        self._regret = np.zeros_like(self._logw)
        self._worst = np.full_like(self._logw, -np.inf)
        self.estimate = np.full(shape.kernel_shape, 1.0 / shape.num_states)
        self.record = record
        self.history: list[dict] = []
        self.t = 1

    @property
    def num_experts(self) -> int:
        return self.t - 1

    def log_weights(self) -> np.ndarray:
        return self._logw[: self.num_experts]

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights())

    def expert_predictions(self) -> np.ndarray:
        """Predictions for the coming episode, one row per expert born at ``1..t-1``."""
        t_done = self.t - 1
        births = np.arange(1, t_done + 1)
        return self.counts.empirical(births, t_done)

    def _grow(self, need: int) -> None:
        if need <= len(self._logw):
            return
        size = max(need, 2 * len(self._logw))
        for name, fill in (("_logw", -np.inf), ("_regret", 0.0), ("_worst", -np.inf)):
            old = getattr(self, name)
            new = np.full((size,) + old.shape[1:], fill)
            new[: len(old)] = old
            setattr(self, name, new)

    def step(self, traj: Trajectory) -> np.ndarray:
        return self.step_samples(extract_samples(traj, self.successor))

    def _losses(self, smoothed: np.ndarray):
        """Learner and expert smoothed log losses for the current episode."""
        t = self.t
        k = t - 1
        X = self.shape.num_states
        cum_all = self.counts.raw[:k]
        hit_now = np.take_along_axis(self.counts.cumulative(k), smoothed[..., None], axis=-1)[..., 0]
        hit_before = np.take_along_axis(
            cum_all, np.broadcast_to(smoothed[None, ..., None], (k,) + smoothed.shape + (1,)), axis=-1
        )[..., 0]
        span = (t - np.arange(1, t)).reshape((-1,) + (1,) * smoothed.ndim)
        expert_loss = -np.log((hit_now[None] - hit_before) / span + 1.0 / X)
        learner_loss = smoothed_log_loss(self.estimate, smoothed)
        return learner_loss, expert_loss

    def step_samples(self, samples: np.ndarray) -> np.ndarray:
        """Consume one episode's per-cell samples and return the next estimate."""
        t = self.t
        X = self.shape.num_states
        samples = np.asarray(samples, dtype=np.int64)
        smoothed = np.ascontiguousarray(smoothed_sample(samples, X, self.rng), dtype=np.int64)
        k = t - 1
        if k > 0:
            # experts 1..t-1 predicted from episodes s..t-1
            if self.record or self.backend == "numpy":
                learner_loss, expert_loss = self._losses(smoothed)
                if self.record:
                    self.history.append({"t": t, "learner": learner_loss, "experts": expert_loss})
            if self.backend == "numpy":
                regret = self._regret[:k] + (learner_loss[None] - expert_loss)
                self._regret[:k] = regret
                self._worst[:k] = np.maximum(self._worst[:k], regret)
                logits = self._logw[:k] - self.eta * expert_loss
                self._logw[:k] = logits - logsumexp(logits, axis=0, keepdims=True)
            else:
                _compiled.score_experts(self.counts.raw, k, smoothed, self.estimate, self._logw,
                                        self._regret, self._worst, self.eta)
        self.counts.append(samples)
        self._grow(t)
        if self.backend == "numpy":
            if k > 0:
                self._logw[:k] += math.log(k / t)
            self._logw[k] = -math.log(t)
            weights = np.exp(self._logw[:t])
            preds = self.counts.empirical(np.arange(1, t + 1), t)
            self.estimate = np.einsum("s...,s...y->...y", weights, preds)
        else:
            estimate = np.empty(self.shape.kernel_shape)
            _compiled.birth_and_aggregate(self.counts.raw, t, self._logw, estimate)
            self.estimate = estimate
        self.t = t + 1
        return self.estimate

    def worst_regret(self) -> float:
        """Largest cumulative sleeping regret of the aggregate against any expert, any prefix."""
        k = self.num_experts
        if k == 0:
            return 0.0
        finite = self._worst[:k][np.isfinite(self._worst[:k])]
        return float(finite.max()) if finite.size else 0.0

    def regret_bound(self) -> float:
        """``log`` of the number of episodes scored so far (at least ``log 1 = 0``)."""
        return math.log(max(self.t - 1, 1))
