"""Oracle comparator sequences for dynamic regret.

``per-episode-optimal`` minimises each ``F^t`` over the occupancies of the
true kernel ``p^t``; ``piecewise-optimal`` minimises the sum of the
objectives over every maximal run of identical kernels; ``best-fixed``
returns one policy for the whole run. Linear objectives are solved exactly
by backward dynamic programming, everything else by away-step Frank-Wolfe
whose linear minimisation oracle is the same dynamic program.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..lea import NumericalError
from ..mdp import MdpShape, induce_occupancy, policy_from_occupancy, policy_variation
from ..objectives import CurlObjective, LinearObjective, SumObjective

MODES = ("per-episode-optimal", "best-fixed", "piecewise-optimal")


def dp_optimal_policy(loss: np.ndarray, kernel: np.ndarray, shape: MdpShape) -> tuple[np.ndarray, float]:
    """Deterministic optimal policy for ``<loss, mu>`` and its value.

    Ties go to the lowest action index.
    """
    loss = np.asarray(loss, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    N, X, A = shape.policy_shape
    policy = np.zeros((N, X, A))
    value = np.zeros(X)
    for n in range(N - 1, -1, -1):
        q = loss[n] if n == N - 1 else loss[n] + kernel[n + 1] @ value
        best = np.argmin(q, axis=-1)
        policy[n, np.arange(X), best] = 1.0
        value = q[np.arange(X), best]
    rho = np.einsum("xa,xay->y", shape.initial_dist, kernel[0])
    return policy, float(rho @ value)


def _line_search(objective: CurlObjective, x: np.ndarray, d: np.ndarray, top: float) -> float:
    if top <= 0:
        return 0.0
    res = minimize_scalar(lambda g: objective.value(x + g * d), bounds=(0.0, top), method="bounded",
                          options={"xatol": 1e-12})
    gamma = float(res.x)
    # the bounded search never lands exactly on an end point
    for edge in (0.0, top):
        if objective.value(x + edge * d) <= objective.value(x + gamma * d):
            gamma = edge
    return gamma


def frank_wolfe(objective: CurlObjective, kernel: np.ndarray, shape: MdpShape, tol: float = 1e-6,
                max_iter: int = 10_000) -> tuple[np.ndarray, float, int]:
    """Minimise a convex ``F`` over ``M(kernel)``; returns ``(occupancy, gap, iterations)``.

    The gap is the Frank-Wolfe duality gap, an upper bound on suboptimality.
    Raises :class:`NumericalError` if it is still above ``tol`` after ``max_iter`` steps.
    """
    kernel = np.asarray(kernel, dtype=float)

    def vertex(grad):
        pol, _ = dp_optimal_policy(grad, kernel, shape)
        return pol.tobytes(), induce_occupancy(pol, kernel, shape)

    start_occ = induce_occupancy(np.full(shape.policy_shape, 1.0 / shape.num_actions), kernel, shape)
    key, v = vertex(objective.grad(start_occ))
    active = {key: [1.0, v]}
    x = v.copy()
    gap = np.inf
    for it in range(1, max_iter + 1):
        g = objective.grad(x)
        key, s = vertex(g)
        d_fw = s - x
        gap = float(-np.sum(g * d_fw))
        if gap <= tol:
            return x, max(gap, 0.0), it
        away_key = max(active, key=lambda k: float(np.sum(g * active[k][1])))
        a_weight, a_vertex = active[away_key]
        d_away = x - a_vertex
        if gap >= float(-np.sum(g * d_away)) or len(active) == 1:
            gamma = _line_search(objective, x, d_fw, 1.0)
            for k in active:
                active[k][0] *= 1.0 - gamma
            if key in active:
                active[key][0] += gamma
            else:
                active[key] = [gamma, s]
            x = x + gamma * d_fw
            if gamma == 1.0:
                active = {key: [1.0, s]}
        else:
            top = a_weight / (1.0 - a_weight)
            gamma = _line_search(objective, x, d_away, top)
            for k in active:
                active[k][0] *= 1.0 + gamma
            active[away_key][0] -= gamma
            x = x + gamma * d_away
            if gamma == top:
                del active[away_key]
        active = {k: w for k, w in active.items() if w[0] > 0}
        if not np.all(np.isfinite(x)):
            raise NumericalError("Frank-Wolfe iterate is not finite")
    raise NumericalError(f"Frank-Wolfe stopped at gap {gap:.3e} > {tol:.1e} after {max_iter} iterations")


def minimise(objective: CurlObjective, kernel: np.ndarray, shape: MdpShape, tol: float = 1e-6,
             max_iter: int = 10_000) -> tuple[np.ndarray, float]:
    """Optimal policy for ``objective`` under ``kernel`` and the achieved gap (0 when solved by DP)."""
    if objective.is_linear:
        loss = objective.grad(np.zeros(shape.occupancy_shape))
        policy, _ = dp_optimal_policy(loss, kernel, shape)
        return policy, 0.0
    occ, gap, _ = frank_wolfe(objective, kernel, shape, tol, max_iter)
    return policy_from_occupancy(occ), gap


def evaluate(objectives, occupancies: np.ndarray) -> np.ndarray:
    """``F^t(occupancies[t])`` for every episode."""
    occupancies = np.asarray(occupancies, dtype=float)
    if all(isinstance(f, LinearObjective) for f in objectives):
        losses = np.stack([f.loss for f in objectives])
        return np.einsum("tnxa,tnxa->t", occupancies, losses)
    return np.array([f.value(o) for f, o in zip(objectives, occupancies)])


@dataclass
class ComparatorResult:
    mode: str
    policies: np.ndarray
    losses: np.ndarray
    variation: float
    max_gap: float


def _runs(kernels: np.ndarray) -> list[tuple[int, int]]:
    T = len(kernels)
    starts = [0] + [t for t in range(1, T) if not np.array_equal(kernels[t], kernels[t - 1])]
    return list(zip(starts, starts[1:] + [T]))


def _interval_solution(objectives, kernel, shape, tol, max_iter, cache):
    parts = list(objectives)
    if all(isinstance(f, LinearObjective) for f in parts):
        loss = np.sum([f.loss for f in parts], axis=0)
        key = ("linear", loss.tobytes(), kernel.tobytes())
        if key not in cache:
            cache[key] = (dp_optimal_policy(loss, kernel, shape)[0], 0.0)
        return cache[key]
    objective = parts[0] if len(parts) == 1 else SumObjective(parts)
    return minimise(objective, kernel, shape, tol, max_iter)


def oracle_comparators(kernels: np.ndarray, objectives, shape: MdpShape, mode: str, tol: float = 1e-6,
                       max_iter: int = 10_000) -> ComparatorResult:
    """Comparator policies, their per-episode losses under the true kernels, and ``Delta^{pi*}``.

    ``best-fixed`` is exact when the kernel never changes; otherwise it is the
    best of the piecewise-optimal policies, i.e. an upper bound on the best
    fixed policy's loss.
    """
    kernels = np.asarray(kernels, dtype=float)
    objectives = list(objectives)
    T = len(objectives)
    if kernels.shape[0] != T:
        raise ValueError("need one kernel per objective")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    cache: dict = {}
    gaps = [0.0]
    policies = np.empty((T,) + shape.policy_shape)
    if mode == "per-episode-optimal":
        for t in range(T):
            policies[t], gap = _interval_solution([objectives[t]], kernels[t], shape, tol, max_iter, cache)
            gaps.append(gap)
    else:
        runs = _runs(kernels)
        for a, b in runs:
            policies[a:b], gap = _interval_solution(objectives[a:b], kernels[a], shape, tol, max_iter, cache)
            gaps.append(gap)
        if mode == "best-fixed" and len(runs) > 1:
            candidates = np.unique(policies[[a for a, _ in runs]], axis=0)
            totals = [evaluate(objectives, induce_occupancy(c, kernels, shape)).sum() for c in candidates]
            policies[:] = candidates[int(np.argmin(totals))]
    losses = evaluate(objectives, induce_occupancy(policies, kernels, shape))
    return ComparatorResult(mode, policies, losses, policy_variation(policies), float(max(gaps)))
