from __future__ import annotations

import math

import numpy as np
import pytest

from metacurl.lea import (
    NumericalError,
    SleepingEWA,
    convex_learning_rate,
    ewa_update,
    log_ewa_update,
    mix,
    regret_accounting,
    sleeping_wrap,
)


def test_equal_losses_keep_weights():
    w = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(ewa_update(w, np.full(3, 0.4), 1.0), w, atol=1e-15)


def test_two_expert_example():
    np.testing.assert_allclose(ewa_update(np.array([0.5, 0.5]), np.array([0.0, 1.0]), math.log(2)),
                               [2 / 3, 1 / 3], atol=1e-15)


def test_shift_invariance_is_bitwise_for_exact_shifts(rng):
    # when l + c is exactly representable the stabilised exponent is unchanged bit for bit
    w = rng.dirichlet(np.ones(5))
    losses = rng.integers(0, 64, 5) / 64.0
    for c in (3.0, -17.0, 1024.0):
        assert np.array_equal(ewa_update(w, losses, 0.7), ewa_update(w, losses + c, 0.7))


def test_shift_invariance_generic(rng):
    w = rng.dirichlet(np.ones(5))
    losses = rng.random(5)
    np.testing.assert_allclose(ewa_update(w, losses, 0.7), ewa_update(w, losses + 3.1, 0.7), rtol=1e-14)


def test_log_domain_matches_linear(rng):
    w = rng.dirichlet(np.ones(6))
    losses = rng.random(6)
    np.testing.assert_allclose(np.exp(log_ewa_update(np.log(w), losses, 0.9)), ewa_update(w, losses, 0.9),
                               atol=1e-15)


def test_non_finite_losses_raise():
    with pytest.raises(NumericalError):
        ewa_update(np.array([0.5, 0.5]), np.array([0.0, np.nan]), 1.0)


def test_sleeping_wrap_cases(rng):
    preds = rng.random((3, 4))
    u, _ = sleeping_wrap(preds, np.array([0.2, 0.3, 0.5]), np.array([False, True, False]))
    np.testing.assert_allclose(u, preds[1])
    with pytest.raises(ValueError):
        sleeping_wrap(preds, np.array([0.0, 0.0, 1.0]), np.array([True, True, False]))


def test_sleeping_identity(rng):
    """Regret of the wrapped standard game equals the sleeping regret, round by round."""
    K, T, d = 5, 60, 3
    learner = SleepingEWA(K, 0.5)
    std_regret = np.zeros(K)
    learner_losses, expert_losses, signals = [], [], []
    for _ in range(T):
        active = rng.random(K) < 0.6
        active[rng.integers(K)] = True
        preds = rng.dirichlet(np.ones(d), size=K)
        target = rng.dirichlet(np.ones(d))
        loss = lambda u: float(np.abs(u - target).sum()) / 2
        u_hat, modified = learner.predict(preds, active)
        np.testing.assert_allclose(mix(modified, learner.weights), u_hat, atol=1e-12)
        l_hat = loss(u_hat)
        std_losses = np.array([loss(m) for m in modified])
        std_regret += l_hat - std_losses
        e = np.array([loss(p) for p in preds])
        learner_losses.append(l_hat)
        expert_losses.append(e)
        signals.append(active)
        learner.update(e, l_hat, active)
    sleep = regret_accounting(learner_losses, np.array(expert_losses), np.array(signals))
    np.testing.assert_allclose(std_regret, sleep, atol=1e-10)


def test_regret_accounting_copy_and_errors():
    e = np.array([[0.1, 0.9], [0.4, 0.2]])
    np.testing.assert_allclose(regret_accounting(e[:, 0], e)[0], 0.0)
    with pytest.raises(ValueError):
        regret_accounting(np.zeros(3), e)


def test_learning_rate():
    assert convex_learning_rate(100, 4) == pytest.approx(math.sqrt(8 * math.log(4) / 100))
