"""
Occupancy measures of a small episodic MDP
==========================================

A policy and a transition kernel induce one state-action distribution per
step. We compute it by the forward recursion, check it against sampled
episodes, and read the policy back off it.
"""
import numpy as np

from metacurl.mdp import (MdpShape, NoiseDynamics, empirical_occupancy, induce_occupancy, policy_from_occupancy,
                          random_policy, sample_episodes)

rng = np.random.default_rng(0)
shape = MdpShape.uniform(3, 2, 4)

# %%
# Dynamics are a known successor map g(x, a, noise) plus an unknown noise law.
N, X, A = shape.policy_shape
successor = np.stack([rng.permutation(X) for _ in range(N * X * A)]).reshape(N, X, A, X)
noise = rng.dirichlet(np.ones(X), size=N)
dynamics = NoiseDynamics(successor, noise)
kernel = dynamics.kernel()

# %%
# Forward recursion against 50 000 sampled episodes.
policy = random_policy(shape, rng)
occ = induce_occupancy(policy, kernel, shape)
states, actions, _ = sample_episodes(policy, dynamics, shape, 50_000, rng)
emp = empirical_occupancy(states, actions, shape)
print("per-step L1 gap to Monte Carlo:", np.round(np.abs(occ - emp).sum(axis=(1, 2)), 4))

# %%
# The policy is recovered wherever the state is reached.
back = policy_from_occupancy(occ)
print("max policy round-trip error:", float(np.abs(back - policy).max()))
