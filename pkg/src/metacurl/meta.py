"""MetaCURL: sleeping-EWA aggregation of restarted Greedy MD-CURL instances.

Each episode a new cohort of instances (one per learning rate) is born. The
meta learner mixes the instances' occupancies under its own kernel estimate,
plays the policy of the mixture, and reweights the instances by their
estimated losses once the objective is revealed.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .estimator import KernelEstimator, extract_samples
from .greedy import BlackboxBank
from .lea import log_ewa_update
from .mdp import MdpShape, Trajectory, as_generator, induce_occupancy, policy_from_occupancy


def learning_rate_grid(T: int) -> np.ndarray:
    """``{2^-j : j = 0, ..., ceil(log2(T) / 2)}``, largest first."""
    if T < 1:
        raise ValueError("T must be positive")
    top = math.ceil(math.log2(T) / 2) if T > 1 else 0
    return 2.0 ** -np.arange(top + 1)


def meta_learning_rate(T: int, num_rates: int) -> float:
    """``sqrt(8 log(T |grid|) / T)``, the convex-loss EWA tuning for ``T |grid|`` experts."""
    return math.sqrt(8.0 * math.log(max(T * num_rates, 2)) / T)


def meta_regret_bound(T: int, num_rates: int) -> float:
    return math.sqrt(0.5 * T * math.log(max(T * num_rates, 2)))


def spawn_weights(weights: np.ndarray, t: int, num_rates: int) -> np.ndarray:
    """Scale the old weights by ``(t-1)/t`` and append ``num_rates`` newcomers at ``1/(num_rates t)``."""
    weights = np.asarray(weights, dtype=float).reshape(-1)
    fresh = np.full(num_rates, 1.0 / (num_rates * t))
    return np.concatenate([weights * (t - 1) / t, fresh])


def aggregate_occupancies(weights: np.ndarray, occupancies: np.ndarray) -> np.ndarray:
    """``sum_k v_k mu_k`` over the leading axes of ``weights``, in a fixed index order."""
    weights = np.asarray(weights, dtype=float)
    occupancies = np.asarray(occupancies, dtype=float)
    lead = weights.ndim
    if occupancies.shape[:lead] != weights.shape:
        raise RuntimeError(f"{weights.shape} weights for {occupancies.shape[:lead]} instances")
    w = weights.reshape(-1)
    occ = occupancies.reshape((-1,) + occupancies.shape[lead:])
    return np.einsum("k,k...->...", w, occ)


class MetaCURL:
    """The meta learner; drive it with :meth:`play` then :meth:`update` once per episode.

    Expert losses fed to EWA are ``F^t / N`` so that they lie in ``[0, 1]``.
    ``spawn=False`` keeps only the first cohort. ``share_kernel=True`` lets the
    instances use the meta estimator instead of their own empirical kernels.
    """

    def __init__(self, shape: MdpShape, successor: np.ndarray, T: int, grid=None, eta: float | None = None,
                 spawn: bool = True, share_kernel: bool = False, rng=None, workers: int = 1,
                 record: bool = False, backend: str = "compiled"):
        self.shape = shape
        self.successor = np.asarray(successor)
        self.T = T
        self.grid = learning_rate_grid(T) if grid is None else np.asarray(grid, dtype=float)
        self.num_rates = len(self.grid)
        self.eta = meta_learning_rate(T, self.num_rates) if eta is None else float(eta)
        self.spawn = spawn
        self.share_kernel = share_kernel
        self.workers = max(1, int(workers))
        self.estimator = KernelEstimator(shape, successor, rng=as_generator(rng), capacity=T, backend=backend)
        cap = T if spawn else 1
        self.bank = BlackboxBank(shape, self.grid, capacity=cap, backend=backend)
        self._logw = np.full((cap, self.num_rates), -np.inf)
        self._regret = np.zeros((cap, self.num_rates))
        self._worst = np.full((cap, self.num_rates), -np.inf)
        self.record = record
        self.history: list[dict] = []
        self.t = 1
        self._pending = None

    # ------------------------------------------------------------------ pool

    @property
    def num_cohorts(self) -> int:
        return self.bank.size

    @property
    def num_instances(self) -> int:
        return self.bank.size * self.num_rates

    def weights(self) -> np.ndarray:
        return np.exp(self._logw[: self.bank.size])

    def births(self) -> np.ndarray:
        return self.bank.births[: self.bank.size].copy()

    def _spawn(self) -> None:
        t = self.t
        if not (self.spawn or t == 1):
            return
        B = self.bank.size
        if B:
            self._logw[:B] += math.log((t - 1) / t)
        if B + 1 > len(self._logw):
            grow = max(B + 1, 2 * len(self._logw))
            for name, fill in (("_logw", -np.inf), ("_regret", 0.0), ("_worst", -np.inf)):
                old = getattr(self, name)
                new = np.full((grow, self.num_rates), fill)
                new[: len(old)] = old
                setattr(self, name, new)
        self.bank.spawn(t)
        self._logw[B] = -math.log(self.num_rates * t)

    def _chunks(self):
        B = self.bank.size
        if self.workers == 1 or B < 2 * self.workers:
            return [slice(0, B)]
        edges = np.linspace(0, B, self.workers + 1).astype(int)
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def _map(self, fn):
        chunks = self._chunks()
        if len(chunks) == 1:
            return [fn(chunks[0])]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, chunks))

    # ------------------------------------------------------------------ protocol

    def play(self) -> np.ndarray:
        """Start episode ``t``: spawn, aggregate, and return the policy to play."""
        if self._pending is not None:
            raise RuntimeError("play() called twice without update()")
        self._spawn()
        kernel = self.estimator.estimate
        parts = self._map(lambda rows: self.bank.occupancies(kernel, rows))
        occ = np.concatenate(parts, axis=0)
        weights = self.weights()
        aggregate = aggregate_occupancies(weights, occ)
        policy = policy_from_occupancy(aggregate)
        self._pending = {"occ": occ, "aggregate": aggregate, "policy": policy, "kernel": kernel,
                         "weights": weights}
        return policy

    def instance_policies(self) -> np.ndarray:
        """Policies ``(B, L, N, X, A)`` the instances output for the current episode."""
        return self.bank.policies().copy()

    def update(self, traj: Trajectory, objective) -> dict:
        """Finish episode ``t`` with its trajectory and the revealed objective."""
        if self._pending is None:
            raise RuntimeError("update() before play()")
        pend = self._pending
        self._pending = None
        t = self.t
        N = self.shape.horizon
        B = self.bank.size
        expert_losses = np.asarray(objective.value(pend["occ"])) / N
        model_occ = induce_occupancy(pend["policy"], pend["kernel"], self.shape)
        learner_loss = float(objective.value(model_occ)) / N

        regret = self._regret[:B] + (learner_loss - expert_losses)
        self._regret[:B] = regret
        self._worst[:B] = np.maximum(self._worst[:B], regret)
        self._logw[:B] = log_ewa_update(self._logw[:B], expert_losses, self.eta, axis=None)

        if objective.is_linear:
            grad_fn = lambda rows: objective.grad()
        else:
            counts = self.estimator.counts
            if self.share_kernel:
                grad_fn = lambda rows: objective.grad(self.bank.occupancies(pend["kernel"], rows))
            else:
                grad_fn = lambda rows: objective.grad(
                    self.bank.occupancies(self.bank.kernels(counts, t - 1, rows), rows))

        grads = self._map(grad_fn)

        samples = extract_samples(traj, self.successor)
        self.estimator.step_samples(samples)

        counts = self.estimator.counts
        shared = self.estimator.estimate if self.share_kernel else None
        chunks = self._chunks()

        def advance(i):
            self.bank.advance(grads[i], counts, t, chunks[i], kernel=shared)

        if len(chunks) == 1:
            advance(0)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(advance, range(len(chunks))))

        weights = self.weights()
        b, l = np.unravel_index(int(np.argmax(weights)), weights.shape)
        row = {
            "t": t,
            "est_loss": learner_loss * N,
            "n_instances": B * self.num_rates,
            "best_birth": int(self.bank.births[b]),
            "best_rate": float(self.grid[l]),
        }
        if self.record:
            row.update(expert_losses=expert_losses.copy(), weights_before=pend["weights"], weights=np.exp(self._logw[:B]).copy(),
                       aggregate=pend["aggregate"], model_occ=model_occ, policy=pend["policy"])
        self.history.append(row)
        self.t = t + 1
        return row

    # ------------------------------------------------------------------ audit

    def regret_matrix(self) -> np.ndarray:
        """Cumulative scaled estimated-loss regret against each ``(birth, rate)`` instance."""
        return self._regret[: self.bank.size].copy()

    def worst_regret(self) -> float:
        return float(self._worst[: self.bank.size].max()) if self.bank.size else 0.0

    def regret_bound(self) -> float:
        return meta_regret_bound(self.T, self.num_rates)
