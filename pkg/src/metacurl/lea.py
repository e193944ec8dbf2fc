"""Learning with expert advice: EWA (Hedge), the sleeping-expert reduction, regret audits."""
from __future__ import annotations

import math

import numpy as np


class NumericalError(ArithmeticError):
    """A computation produced or received non-finite numbers."""


def ewa_update(weights: np.ndarray, losses: np.ndarray, eta: float) -> np.ndarray:
    """One multiplicative-weights step ``v_k exp(-eta l_k) / Z``.

    Losses are shifted by their minimum before exponentiation, so adding a
    constant to every loss does not change the result.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    weights = np.asarray(weights, dtype=float)
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise NumericalError("non-finite expert loss")
    scaled = weights * np.exp(-eta * (losses - losses.min()))
    return scaled / scaled.sum()


def log_ewa_update(log_weights: np.ndarray, losses: np.ndarray, eta: float, axis: int = 0) -> np.ndarray:
    """Log-domain EWA step along ``axis``; returns normalised log-weights.

    Entries equal to ``-inf`` (absent experts) stay at ``-inf`` whatever their loss.
    """
    losses = np.asarray(losses, dtype=float)
    present = np.isfinite(log_weights)
    if not np.all(np.isfinite(losses[np.broadcast_to(present, losses.shape)])):
        raise NumericalError("non-finite expert loss")
    logits = np.where(present, log_weights - eta * np.where(present, losses, 0.0), -np.inf)
    return logits - logsumexp(logits, axis=axis, keepdims=True)


def logsumexp(a: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    out = np.log(np.sum(np.exp(a - top), axis=axis, keepdims=True)) + top
    return out if keepdims else np.squeeze(out, axis=axis)


def mix(predictions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Convex combination along the first axis, summed in index order."""
    predictions = np.asarray(predictions, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return np.tensordot(weights, predictions, axes=(0, 0))


def sleeping_wrap(predictions: np.ndarray, weights: np.ndarray, active: np.ndarray):
    """Reduce a sleeping-expert round to a standard one.

    Returns ``(u_hat, modified)``: the renormalised mixture of the active
    experts and the prediction array where every sleeping expert copies
    ``u_hat``. Mixing ``modified`` with the full weight vector gives back ``u_hat``.
    """
    predictions = np.asarray(predictions, dtype=float)
    weights = np.asarray(weights, dtype=float)
    active = np.asarray(active, dtype=bool)
    mass = weights * active
    total = mass.sum()
    if not active.any() or total <= 0:
        raise ValueError("the active experts carry no weight")
    u_hat = mix(predictions, mass / total)
    modified = predictions.copy()
    modified[~active] = u_hat
    return u_hat, modified


class SleepingEWA:
    """EWA over a fixed expert set with per-round activity signals.

    Sleeping experts are charged the learner's own loss, which is exactly the
    reduction in :func:`sleeping_wrap`; their relative weight therefore stays put.
    """

    def __init__(self, num_experts: int, eta: float, prior: np.ndarray | None = None):
        if num_experts < 1:
            raise ValueError("need at least one expert")
        if not eta > 0:
            raise ValueError("eta must be positive")
        self.eta = eta
        prior = np.full(num_experts, 1.0 / num_experts) if prior is None else np.asarray(prior, float)
        self.weights = prior / prior.sum()

    def predict(self, predictions: np.ndarray, active: np.ndarray):
        return sleeping_wrap(predictions, self.weights, active)

    def update(self, expert_losses: np.ndarray, learner_loss: float, active: np.ndarray) -> None:
        active = np.asarray(active, dtype=bool)
        losses = np.where(active, expert_losses, learner_loss)
        self.weights = ewa_update(self.weights, losses, self.eta)


def regret_accounting(learner_losses, expert_losses, signal=None) -> np.ndarray:
    """Cumulative sleeping regret ``sum_t I^{t,k} (l_hat^t - l^{t,k})`` for every expert ``k``."""
    learner = np.asarray(learner_losses, dtype=float)
    experts = np.asarray(expert_losses, dtype=float)
    if experts.ndim != 2 or experts.shape[0] != learner.shape[0]:
        raise ValueError("expert_losses must be (T, K) with T matching learner_losses")
    if signal is None:
        signal = np.ones_like(experts, dtype=bool)
    signal = np.asarray(signal, dtype=bool)
    if signal.shape != experts.shape:
        raise ValueError("signal must match expert_losses in shape")
    return np.where(signal, learner[:, None] - experts, 0.0).sum(axis=0)


def convex_learning_rate(T: int, K: int) -> float:
    """The tuning ``sqrt(8 log K / T)`` for losses in [0, 1]."""
    return math.sqrt(8.0 * math.log(K) / T)


def convex_regret_bound(T: int, K: int) -> float:
    return math.sqrt(0.5 * T * math.log(K))
