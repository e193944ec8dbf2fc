from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import enumerate_occupancy, permutation_dynamics, random_instance
from metacurl.mdp import (
    DimensionError,
    MdpShape,
    NoiseDynamics,
    Trajectory,
    check_kernel,
    empirical_occupancy,
    flow_violation,
    induce_occupancy,
    inverse_pinsker_check,
    kernel_from_dynamics,
    kernel_variation,
    occupancy_l1_bound_check,
    occupancy_policy_bound_check,
    policy_from_occupancy,
    policy_variation,
    random_kernel,
    random_policy,
    sample_episode,
    sample_episodes,
    uniform_kernel,
    uniform_policy,
)


def test_single_state_occupancy_is_the_policy(rng):
    shape = MdpShape.uniform(1, 3, 4)
    pol = random_policy(shape, rng)
    occ = induce_occupancy(pol, random_kernel(shape, rng), shape)
    np.testing.assert_allclose(occ[:, 0, :], pol[:, 0, :], atol=1e-15)


def test_uniform_everything_gives_uniform_occupancy():
    shape = MdpShape.uniform(3, 2, 5)
    occ = induce_occupancy(uniform_policy(shape), uniform_kernel(shape), shape)
    np.testing.assert_allclose(occ, 1.0 / 6.0, atol=1e-15)


def test_occupancy_matches_path_enumeration_2x2x3(rng):
    shape = MdpShape.uniform(2, 2, 3)
    pol, ker = random_policy(shape, rng), random_kernel(shape, rng)
    np.testing.assert_allclose(induce_occupancy(pol, ker, shape), enumerate_occupancy(pol, ker, shape),
                               atol=1e-12)


def test_batched_occupancy_matches_loop(rng):
    shape = MdpShape.uniform(3, 2, 3)
    pols = np.stack([random_policy(shape, rng) for _ in range(4)])
    kers = np.stack([random_kernel(shape, rng) for _ in range(4)])
    batched = induce_occupancy(pols, kers, shape)
    for i in range(4):
        np.testing.assert_allclose(batched[i], induce_occupancy(pols[i], kers[i], shape), atol=1e-15)


def test_shape_errors(rng):
    shape = MdpShape.uniform(2, 2, 2)
    with pytest.raises(DimensionError):
        induce_occupancy(np.ones((2, 2, 3)) / 3, uniform_kernel(shape), shape)
    with pytest.raises(ValueError):
        check_kernel(np.ones(shape.kernel_shape), shape)
    with pytest.raises(ValueError):
        MdpShape.uniform(0, 2, 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_occupancy_satisfies_flow(seed):
    rng = np.random.default_rng(seed)
    shape, pol, ker = random_instance(rng, 8, 8, 10)
    occ = induce_occupancy(pol, ker, shape)
    assert flow_violation(occ, ker, shape) <= 1e-8
    np.testing.assert_allclose(occ.sum(axis=(-2, -1)), 1.0, atol=1e-12)


def test_policy_from_occupancy_examples():
    occ = np.array([[[0.3, 0.1], [0.0, 0.0], [0.2, 0.4]]])
    pol = policy_from_occupancy(occ)
    np.testing.assert_allclose(pol[0, 0], [0.75, 0.25])
    np.testing.assert_allclose(pol[0, 1], [0.5, 0.5])


def test_policy_round_trip(rng):
    shape = MdpShape.uniform(3, 3, 4)
    ker = random_kernel(shape, rng)
    occ = induce_occupancy(random_policy(shape, rng), ker, shape)
    np.testing.assert_allclose(induce_occupancy(policy_from_occupancy(occ), ker, shape), occ, atol=1e-14)


def test_kernel_from_dynamics_rows_sum_to_one(rng):
    shape = MdpShape.uniform(4, 2, 3)
    dyn = permutation_dynamics(shape, rng)
    ker = dyn.kernel()
    np.testing.assert_allclose(ker.sum(-1), 1.0, atol=1e-12)
    # permutation maps: each row is the noise law, permuted
    n, x, a = 1, 2, 0
    np.testing.assert_allclose(ker[n, x, a, dyn.successor[n, x, a]], dyn.noise_dist[n])


def test_deterministic_noise_follows_g(rng):
    shape = MdpShape.uniform(3, 2, 4)
    g = rng.integers(0, 3, size=(4, 3, 2, 1))
    dyn = NoiseDynamics(g, np.ones((4, 1)))
    traj = sample_episode(random_policy(shape, rng), dyn, shape, rng)
    for n in range(4):
        assert traj.states[n + 1] == g[n, traj.states[n], traj.actions[n], 0]
    assert traj.replays(g)


def test_sampling_is_reproducible(rng):
    shape = MdpShape.uniform(3, 2, 4)
    dyn = permutation_dynamics(shape, rng)
    pol = random_policy(shape, rng)
    a = sample_episode(pol, dyn, shape, 7)
    b = sample_episode(pol, dyn, shape, 7)
    for field in ("states", "actions", "noises"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))


def test_monte_carlo_matches_recursion(rng):
    shape = MdpShape.uniform(3, 2, 3)
    dyn = permutation_dynamics(shape, rng)
    pol = uniform_policy(shape)
    states, actions, _ = sample_episodes(pol, dyn, shape, 100_000, 3)
    emp = empirical_occupancy(states, actions, shape)
    exact = induce_occupancy(pol, dyn.kernel(), shape)
    assert np.abs(emp.sum(-1) - exact.sum(-1)).sum(axis=-1).max() <= 0.02


def test_kernel_variation_examples(rng):
    shape = MdpShape.uniform(2, 2, 2)
    k = random_kernel(shape, rng)
    dp, dinf, steps = kernel_variation([k] * 5)
    assert (dp, dinf) == (1.0, 1)
    np.testing.assert_array_equal(steps, np.zeros(4))
    q = k.copy()
    q[1, 0, 1] = [0.2, 0.8]
    k[1, 0, 1] = [0.8, 0.2]  # total variation 0.6
    dp, dinf, _ = kernel_variation([k, q])
    assert dp == pytest.approx(2.2, abs=1e-12) and dinf == 2
    with pytest.raises(ValueError):
        kernel_variation([])


def test_kernel_variation_matches_direct_loop(rng):
    shape = MdpShape.uniform(3, 2, 2)
    seq = [random_kernel(shape, rng) for _ in range(6)]
    expected = 1.0
    for p, q in zip(seq, seq[1:]):
        expected += max(np.abs(p[idx] - q[idx]).sum() for idx in np.ndindex(p.shape[:-1]))
    assert kernel_variation(seq)[0] == pytest.approx(expected, abs=1e-12)


def test_policy_variation_examples(rng):
    shape = MdpShape.uniform(2, 2, 2)
    p = random_policy(shape, rng)
    assert policy_variation([p, p, p]) == 1.0
    q = p.copy()
    q[1, 0] = [0.5, 0.5]
    p[1, 0] = [0.7, 0.3]
    assert policy_variation([p, q]) == pytest.approx(1.4, abs=1e-12)
    with pytest.raises(ValueError):
        policy_variation([])


def test_perturbation_bounds_with_equal_inputs(rng):
    shape = MdpShape.uniform(3, 2, 3)
    pol, ker = random_policy(shape, rng), random_kernel(shape, rng)
    assert occupancy_l1_bound_check(pol, ker, ker, shape)
    assert occupancy_policy_bound_check(pol, pol, ker, shape)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_perturbation_lemmas_hold(seed):
    rng = np.random.default_rng(seed)
    shape, pol, p = random_instance(rng, 4, 3, 5)
    q = random_kernel(shape, rng)
    assert occupancy_l1_bound_check(pol, p, q, shape)
    assert occupancy_policy_bound_check(pol, random_policy(shape, rng), p, shape)
    X = shape.num_states
    assert inverse_pinsker_check(rng.dirichlet(np.ones(X)), rng.dirichlet(np.ones(X)))
