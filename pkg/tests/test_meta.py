from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import permutation_dynamics
from metacurl.greedy import GreedyMDCurl
from metacurl.lea import ewa_update
from metacurl.mdp import MdpShape, flow_violation, induce_occupancy, policy_from_occupancy, sample_episode
from metacurl.meta import (
    MetaCURL,
    aggregate_occupancies,
    learning_rate_grid,
    meta_learning_rate,
    meta_regret_bound,
    spawn_weights,
)
from metacurl.objectives import adversarial_sequence, EntropyObjective

SHAPE = MdpShape.uniform(3, 2, 2)


def test_grid():
    np.testing.assert_array_equal(learning_rate_grid(16), [1.0, 0.5, 0.25])
    for T in (2, 10, 1000, 4000):
        g = learning_rate_grid(T)
        assert g[0] == 1.0 and np.all(np.diff(g) < 0) and g[-1] <= 2 / math.sqrt(T)


def test_spawn_weights_examples():
    np.testing.assert_allclose(spawn_weights(np.array([]), 1, 3), [1 / 3] * 3)
    np.testing.assert_allclose(spawn_weights(np.array([0.7, 0.3]), 2, 2), [0.35, 0.15, 0.25, 0.25])


def test_meta_rate():
    assert meta_learning_rate(100, 4) == pytest.approx(math.sqrt(8 * math.log(400) / 100))


def test_aggregate_basics(rng):
    occ = rng.random((1, 2) + SHAPE.occupancy_shape)
    np.testing.assert_array_equal(aggregate_occupancies(np.array([[1.0, 0.0]]), occ), occ[0, 0])
    same = np.broadcast_to(occ[0, 0], (2, 2) + SHAPE.occupancy_shape)
    np.testing.assert_allclose(aggregate_occupancies(np.full((2, 2), 0.25), same), occ[0, 0])
    with pytest.raises(RuntimeError):
        aggregate_occupancies(np.ones((3, 2)), occ)


def _drive(meta, dyn, objectives, rng):
    for f in objectives:
        pi = meta.play()
        meta.update(sample_episode(pi, dyn, SHAPE, rng), f)
    return meta


def test_invariants_along_a_run(rng):
    dyn = permutation_dynamics(SHAPE, rng)
    T = 40
    meta = MetaCURL(SHAPE, dyn.successor, T, rng=3, record=True)
    objectives = adversarial_sequence("drifting-target-imitation", T, 4, SHAPE, kernel=dyn.kernel(), budget=3.0)
    _drive(meta, dyn, objectives, rng)
    prev_weights = None
    for t, row in enumerate(meta.history, start=1):
        assert row["n_instances"] == t * meta.num_rates
        w = row["weights"]
        agg = row["aggregate"]
        # Jensen on the aggregate; flow feasibility; policy reproduces the aggregate
        f = objectives[t - 1]
        learner = row["est_loss"] / SHAPE.horizon
        assert learner <= float((row["weights_before"] * row["expert_losses"]).sum()) + 1e-12
        np.testing.assert_allclose(row["model_occ"], agg, atol=1e-12)
        assert abs(w.sum() - 1.0) <= 1e-12
    assert meta.worst_regret() <= meta.regret_bound()


def test_weights_replay_standalone_ewa(rng):
    dyn = permutation_dynamics(SHAPE, rng)
    T = 30
    meta = MetaCURL(SHAPE, dyn.successor, T, rng=3, record=True)
    _drive(meta, dyn, adversarial_sequence("iid-random-linear", T, 1, SHAPE), rng)
    L = meta.num_rates
    w = np.zeros(0)
    for t, row in enumerate(meta.history, start=1):
        w = spawn_weights(w, t, L)
        np.testing.assert_allclose(row["weights_before"].reshape(-1), w, atol=1e-12)
        w = ewa_update(w, row["expert_losses"].reshape(-1), meta.eta)
        np.testing.assert_allclose(row["weights"].reshape(-1), w, atol=1e-12)


def test_single_instance_pool_plays_the_instance(rng):
    dyn = permutation_dynamics(SHAPE, rng)
    T = 25
    meta = MetaCURL(SHAPE, dyn.successor, T, grid=[0.3], spawn=False, rng=0)
    inst = GreedyMDCurl(SHAPE, dyn.successor, 0.3)
    f = EntropyObjective(SHAPE)
    for _ in range(T):
        pi = meta.play()
        # the aggregate is the instance's own model occupancy; unreached states fall back to uniform
        reached = induce_occupancy(inst.policy, meta.estimator.estimate, SHAPE).sum(-1) > 0
        np.testing.assert_allclose(pi[reached], inst.policy[reached], atol=1e-12)
        traj = sample_episode(pi, dyn, SHAPE, rng)
        meta.update(traj, f)
        inst.episode(f, traj=traj)


def test_backends_and_workers_agree(rng):
    dyn = permutation_dynamics(SHAPE, rng)
    T = 30
    objectives = adversarial_sequence("iid-random-linear", T, 2, SHAPE)
    runs = []
    for backend, workers in (("compiled", 1), ("compiled", 3), ("numpy", 1)):
        meta = MetaCURL(SHAPE, dyn.successor, T, rng=8, backend=backend, workers=workers)
        played = []
        sample_rng = np.random.default_rng(5)
        for f in objectives:
            pi = meta.play()
            played.append(pi)
            meta.update(sample_episode(pi, dyn, SHAPE, sample_rng), f)
        runs.append(np.array(played))
    assert np.array_equal(runs[0], runs[1])
    np.testing.assert_allclose(runs[0], runs[2], atol=1e-10)


def test_state_errors(rng):
    dyn = permutation_dynamics(SHAPE, rng)
    meta = MetaCURL(SHAPE, dyn.successor, 5)
    with pytest.raises(RuntimeError):
        meta.update(None, None)
    meta.play()
    with pytest.raises(RuntimeError):
        meta.play()
