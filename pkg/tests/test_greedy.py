from __future__ import annotations

import numpy as np
import pytest

from conftest import permutation_dynamics
from metacurl.estimator import SampleCounts, extract_samples
from metacurl.greedy import (
    BlackboxBank,
    DomainError,
    GreedyMDCurl,
    bregman_gamma,
    mirror_descent_step,
    mirror_objective,
    mirror_policy,
    mix_uniform,
)
from metacurl.mdp import MdpShape, induce_occupancy, kl_divergence, random_kernel, random_policy, sample_episode
from metacurl.objectives import LinearObjective, EntropyObjective

SHAPE = MdpShape.uniform(3, 2, 3)


def test_gamma_zero_for_equal_policies(rng):
    pol, ker = random_policy(SHAPE, rng), random_kernel(SHAPE, rng)
    mu = induce_occupancy(pol, ker, SHAPE)
    assert bregman_gamma(mu, mu) == pytest.approx(0.0, abs=1e-15)


def test_gamma_is_expected_policy_kl(rng):
    pol, ref, ker = random_policy(SHAPE, rng), random_policy(SHAPE, rng), random_kernel(SHAPE, rng)
    mu = induce_occupancy(pol, ker, SHAPE)
    rho = mu.sum(-1)
    expected = float((rho * kl_divergence(pol, ref)).sum())
    assert bregman_gamma(mu, None, ref_policy=ref) == pytest.approx(expected, abs=1e-13)
    for _ in range(200):
        pol, ref = random_policy(SHAPE, rng), random_policy(SHAPE, rng)
        assert bregman_gamma(induce_occupancy(pol, ker, SHAPE), None, ref_policy=ref) >= 0.0


def test_gamma_domain_error(rng):
    ker = random_kernel(SHAPE, rng)
    ref = random_policy(SHAPE, rng)
    ref[0, :, 0] = 0.0
    ref[0, :, 1] = 1.0
    mu = induce_occupancy(np.full(SHAPE.policy_shape, 0.5), ker, SHAPE)
    with pytest.raises(DomainError):
        bregman_gamma(mu, None, ref_policy=ref)


def test_zero_rate_returns_reference(rng):
    ref, ker = random_policy(SHAPE, rng), random_kernel(SHAPE, rng)
    out = mirror_policy(ref, rng.random(SHAPE.policy_shape), ker, 0.0)
    assert np.abs(out - ref).max() <= 1e-14


def test_per_step_constant_gradient_is_ignored(rng):
    ref, ker = random_policy(SHAPE, rng), random_kernel(SHAPE, rng)
    grad = np.broadcast_to(rng.random(SHAPE.horizon)[:, None, None], SHAPE.policy_shape)
    assert np.abs(mirror_policy(ref, grad, ker, 0.7) - ref).max() <= 1e-14
    g = rng.random(SHAPE.policy_shape)
    shifted = g + rng.random(SHAPE.horizon)[:, None, None]
    assert np.abs(mirror_policy(ref, g, ker, 0.7) - mirror_policy(ref, shifted, ker, 0.7)).max() <= 1e-14


def test_step_beats_random_feasible_points(rng):
    ref, ker = random_policy(SHAPE, rng), random_kernel(SHAPE, rng)
    grad = rng.random(SHAPE.policy_shape)
    occ, pol = mirror_descent_step(ref, grad, ker, 0.8, SHAPE)
    best = mirror_objective(occ, grad, ref, 0.8)
    for _ in range(300):
        probe = induce_occupancy(random_policy(SHAPE, rng), ker, SHAPE)
        assert best <= mirror_objective(probe, grad, ref, 0.8) + 1e-7


def test_instance_first_episode_and_mixing(rng):
    dyn = permutation_dynamics(SHAPE, rng)
    inst = GreedyMDCurl(SHAPE, dyn.successor, 0.5)
    np.testing.assert_allclose(inst.kernel, 1 / 3)
    traj = sample_episode(inst.policy, dyn, SHAPE, rng)
    inst.episode(LinearObjective(rng.random(SHAPE.policy_shape)), traj=traj)
    onehot = extract_samples(traj, dyn.successor)[..., None] == np.arange(3)
    np.testing.assert_array_equal(inst.kernel, onehot.astype(float))
    for _ in range(20):
        traj = sample_episode(inst.policy, dyn, SHAPE, rng)
        inst.episode(LinearObjective(rng.random(SHAPE.policy_shape)), traj=traj)
        assert inst.mixed.min() >= inst.alpha / SHAPE.num_actions - 1e-15
        np.testing.assert_allclose(inst.mixed, mix_uniform(inst.policy, inst.alpha), atol=1e-15)
        np.testing.assert_allclose(inst.mixed_occupancy, induce_occupancy(inst.mixed, inst.kernel, SHAPE))


def test_instances_are_deterministic(rng):
    dyn = permutation_dynamics(SHAPE, rng)
    a = GreedyMDCurl(SHAPE, dyn.successor, 0.3)
    b = GreedyMDCurl(SHAPE, dyn.successor, 0.3)
    f = EntropyObjective(SHAPE)
    for _ in range(10):
        traj = sample_episode(a.policy, dyn, SHAPE, rng)
        a.episode(f, traj=traj)
        b.episode(f, traj=traj)
    assert np.array_equal(a.policy, b.policy) and np.array_equal(a.kernel, b.kernel)


@pytest.mark.parametrize("backend", ["compiled", "numpy"])
def test_bank_matches_standalone_instances(rng, backend):
    """Every (birth, rate) slot of the bank follows the same path as a standalone instance."""
    dyn = permutation_dynamics(SHAPE, rng)
    rates = np.array([1.0, 0.25])
    T = 12
    bank = BlackboxBank(SHAPE, rates, capacity=2, backend=backend)
    counts = SampleCounts(SHAPE)
    standalone = {}
    objective = EntropyObjective(SHAPE)
    play = random_policy(SHAPE, rng)
    for t in range(1, T + 1):
        bank.spawn(t)
        for l, lam in enumerate(rates):
            standalone[(t, l)] = GreedyMDCurl(SHAPE, dyn.successor, lam, birth=t)
        for (b, l), inst in standalone.items():
            np.testing.assert_allclose(bank.policies()[b - 1, l], inst.policy, atol=1e-12)
        traj = sample_episode(play, dyn, SHAPE, rng)
        samples = extract_samples(traj, dyn.successor)
        grads = objective.grad(bank.occupancies(bank.kernels(counts, t - 1)))
        counts.append(samples)
        bank.advance(grads, counts, t)
        for inst in standalone.values():
            inst.episode(objective, samples=samples)
    for (b, l), inst in standalone.items():
        np.testing.assert_allclose(bank.policies()[b - 1, l], inst.policy, atol=1e-12)
        np.testing.assert_allclose(bank.mixed[b - 1, l], inst.mixed, atol=1e-12)
