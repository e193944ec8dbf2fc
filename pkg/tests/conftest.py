from __future__ import annotations

import itertools

import numpy as np
import pytest

from metacurl.mdp import MdpShape, NoiseDynamics, random_kernel, random_policy


def enumerate_occupancy(policy, kernel, shape):
    """Occupancy by summing the probability of every full path; independent of the forward recursion."""
    N, X, A = shape.policy_shape
    mu0 = shape.initial_dist
    occ = np.zeros((N, X, A))
    pairs = list(itertools.product(range(X), range(A)))
    for path in itertools.product(pairs, repeat=N + 1):
        prob = mu0[path[0]]
        for n in range(1, N + 1):
            (x_prev, a_prev), (x, a) = path[n - 1], path[n]
            prob *= kernel[n - 1, x_prev, a_prev, x] * policy[n - 1, x, a]
            if prob == 0.0:
                break
        else:
            for n in range(1, N + 1):
                occ[n - 1][path[n]] += prob
    return occ


def random_instance(rng, max_states=3, max_actions=3, max_horizon=4):
    X = int(rng.integers(1, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    N = int(rng.integers(1, max_horizon + 1))
    mu0 = rng.dirichlet(np.ones(X * A)).reshape(X, A)
    shape = MdpShape(X, A, N, mu0)
    return shape, random_policy(shape, rng), random_kernel(shape, rng)


def permutation_dynamics(shape, rng, noise=None):
    N, X, A = shape.policy_shape
    g = np.stack([rng.permutation(X) for _ in range(N * X * A)]).reshape(N, X, A, X)
    h = rng.dirichlet(np.ones(X), size=N) if noise is None else noise
    return NoiseDynamics(g, h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: criterion -> list of (part, passed, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{name}: {text} [{'ok' if ok else 'FAILED'}]" for name, ok, text in parts)
        terminalreporter.write_line(f"criterion {k}: {verdict} -- {detail}")
