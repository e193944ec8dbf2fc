"""Compiled inner loops for the instance pool and the kernel estimator.

Every routine here has a plain numpy counterpart elsewhere in the package
(``induce_occupancy``, ``mirror_policy``, ``KernelEstimator`` with
``backend="numpy"``); tests check that the two agree. The loops release the
GIL so that callers may split the pool across threads. Each output cell is
computed by one fixed sequence of operations, so the result does not depend
on how the pool is split.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, error_model="numpy")
def induce_pool(policy, kernels, mu0, out):
    """Occupancies of ``policy`` ``(B, L, N, X, A)`` into ``out``.

    ``kernels`` is ``(K, N, X, A, X)`` with ``K`` either 1 (shared) or ``B``.
    """
    B, L, N, X, A = policy.shape
    K = kernels.shape[0]
    rho = np.empty(X)
    for b in range(B):
        kb = b if K > 1 else 0
        for l in range(L):
            for n in range(N):
                rho[:] = 0.0
                for x in range(X):
                    for a in range(A):
                        m = mu0[x, a] if n == 0 else out[b, l, n - 1, x, a]
                        if m != 0.0:
                            for y in range(X):
                                rho[y] += m * kernels[kb, n, x, a, y]
                for y in range(X):
                    for a in range(A):
                        out[b, l, n, y, a] = rho[y] * policy[b, l, n, y, a]


@njit(cache=True, nogil=True, error_model="numpy")
def mirror_pool(mixed, grad, kernels, rates, alpha, policy_out, mixed_out):
    """Soft backward recursion for every ``(b, l)``, then uniform mixing at ``alpha[b]``.

    ``grad`` is ``(GB, GL, N, X, A)`` with ``GB in {1, B}`` and ``GL in {1, L}``;
    ``kernels`` as in :func:`induce_pool`. ``mixed_out`` may alias ``mixed``.
    """
    B, L, N, X, A = mixed.shape
    GB, GL = grad.shape[0], grad.shape[1]
    K = kernels.shape[0]
    value = np.zeros(X)
    nxt = np.zeros(X)
    cost = np.empty(A)
    for b in range(B):
        kb = b if K > 1 else 0
        gb = b if GB > 1 else 0
        mix_rate = alpha[b]
        for l in range(L):
            gl = l if GL > 1 else 0
            lam = rates[l]
            for n in range(N - 1, -1, -1):
                for x in range(X):
                    low = np.inf
                    for a in range(A):
                        c = lam * grad[gb, gl, n, x, a]
                        if n < N - 1:
                            for y in range(X):
                                c += kernels[kb, n + 1, x, a, y] * value[y]
                        cost[a] = c
                        if mixed[b, l, n, x, a] > 0.0 and c < low:
                            low = c
                    norm = 0.0
                    for a in range(A):
                        ref = mixed[b, l, n, x, a]
                        w = ref * math.exp(low - cost[a]) if ref > 0.0 else 0.0
                        cost[a] = w
                        norm += w
                    for a in range(A):
                        p = cost[a] / norm
                        policy_out[b, l, n, x, a] = p
                        mixed_out[b, l, n, x, a] = (1.0 - mix_rate) * p + mix_rate / A
                    nxt[x] = low - math.log(norm)
                for x in range(X):
                    value[x] = nxt[x]


@njit(cache=True, nogil=True, error_model="numpy")
def windowed_kernels(cum, births, t, num_states, out):
    """Empirical kernels over ``[s, t]`` per birth ``s`` (uniform when ``s > t``)."""
    B = births.shape[0]
    _, N, X, A, Y = cum.shape
    for i in range(B):
        s = births[i]
        if s > t:
            for n in range(N):
                for x in range(X):
                    for a in range(A):
                        for y in range(Y):
                            out[i, n, x, a, y] = 1.0 / num_states
        else:
            span = t - s + 1
            for n in range(N):
                for x in range(X):
                    for a in range(A):
                        for y in range(Y):
                            out[i, n, x, a, y] = (cum[t, n, x, a, y] - cum[s - 1, n, x, a, y]) / span


@njit(cache=True, nogil=True, error_model="numpy")
def score_experts(cum, k, smoothed, estimate, logw, regret, worst, eta):
    """Score experts born at ``1..k`` (data ``s..k``) on the smoothed samples of episode ``k + 1``.

    Updates ``logw[:k]`` by a normalised EWA step and the running regret audit in place.
    """
    _, N, X, A, Y = cum.shape
    floor = 1.0 / Y
    for n in range(N):
        for x in range(X):
            for a in range(A):
                y = smoothed[n, x, a]
                learner = -math.log(estimate[n, x, a, y] + floor)
                top = -np.inf
                for i in range(k):
                    hits = cum[k, n, x, a, y] - cum[i, n, x, a, y]
                    loss = -math.log(hits / (k - i) + floor)
                    r = regret[i, n, x, a] + learner - loss
                    regret[i, n, x, a] = r
                    if r > worst[i, n, x, a]:
                        worst[i, n, x, a] = r
                    z = logw[i, n, x, a] - eta * loss
                    logw[i, n, x, a] = z
                    if z > top:
                        top = z
                total = 0.0
                for i in range(k):
                    total += math.exp(logw[i, n, x, a] - top)
                shift = top + math.log(total)
                for i in range(k):
                    logw[i, n, x, a] -= shift


@njit(cache=True, nogil=True, error_model="numpy")
def birth_and_aggregate(cum, t, logw, estimate):
    """Scale ``logw[:t-1]`` by ``(t-1)/t``, add expert ``t`` at ``1/t``, and mix the windowed empiricals."""
    _, N, X, A, Y = cum.shape
    k = t - 1
    old = math.log(k / t) if k > 0 else 0.0
    fresh = -math.log(t)
    for n in range(N):
        for x in range(X):
            for a in range(A):
                for i in range(k):
                    logw[i, n, x, a] += old
                logw[k, n, x, a] = fresh
                for y in range(Y):
                    estimate[n, x, a, y] = 0.0
                for i in range(t):
                    w = math.exp(logw[i, n, x, a])
                    span = t - i
                    for y in range(Y):
                        estimate[n, x, a, y] += w * (cum[t, n, x, a, y] - cum[i, n, x, a, y]) / span
