"""Run a learner against a generated environment and adversary; emit regret traces."""
from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..estimator import KernelEstimator
from ..greedy import GreedyMDCurl
from ..mdp import induce_occupancy, random_policy, sample_episode
from ..meta import MetaCURL
from ..objectives import adversarial_sequence
from .comparators import MODES, ComparatorResult, oracle_comparators
from .config import ConfigError, ExperimentConfig
from .environments import Environment, generate_environment

log = logging.getLogger("metacurl")

CSV_COLUMNS = ("t", "true_loss", "est_loss", "comparator_loss", "cum_regret", "n_instances",
               "active_best_s", "active_best_lambda")


def _streams(seed: int):
    env, adversary, sampling, learner = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(env), np.random.default_rng(adversary), np.random.default_rng(sampling),
            np.random.default_rng(learner))


def build_objectives(config: ExperimentConfig, env: Environment, rng):
    try:
        return adversarial_sequence(config.objective, config.episodes, rng, env.shape, period=config.period,
                                    kernel=env.kernels(), budget=config.target_budget)
    except ValueError as exc:  # e.g. an unreachable target drift budget
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------- learners


class _MetaLearner:
    def __init__(self, config, env, rng, track):
        self.model = MetaCURL(env.shape, env.successor, config.episodes, grid=config.grid, rng=rng,
                              workers=config.workers, share_kernel=config.share_kernel)
        self.shape = env.shape
        self.track = dict(track)
        self.tracked: dict[int, dict[str, list]] = {s: {"true": [], "est": []} for s in self.track}

    def play(self, t, kernel, objective_later):
        policy = self.model.play()
        self._instances = self.model.instance_policies()
        self._estimate = self.model.estimator.estimate
        return policy

    def record_instances(self, t, kernel, objective):
        for s, stop in self.track.items():
            if s <= t <= stop:
                pols = self._instances[s - 1]
                self.tracked[s]["true"].append(objective.value(induce_occupancy(pols, kernel, self.shape)))
                self.tracked[s]["est"].append(objective.value(induce_occupancy(pols, self._estimate, self.shape)))

    def update(self, traj, objective):
        row = self.model.update(traj, objective)
        return row["est_loss"], row["n_instances"], row["best_birth"], row["best_rate"]

    def audit(self) -> dict:
        return {
            "meta_worst_regret": self.model.worst_regret(),
            "meta_regret_bound": self.model.regret_bound(),
            "estimator_worst_regret": self.model.estimator.worst_regret(),
            "estimator_regret_bound": self.model.estimator.regret_bound(),
        }

    @property
    def estimate(self):
        return self.model.estimator.estimate


class _SingleLearner:
    def __init__(self, config, env, rng):
        self.rate = config.single_rate if config.single_rate is not None else 1.0 / math.sqrt(config.episodes)
        self.model = GreedyMDCurl(env.shape, env.successor, self.rate)
        self.shape = env.shape

    def play(self, t, kernel, objective_later):
        self._est = self.model.model_occupancy()
        return self.model.policy

    def record_instances(self, t, kernel, objective):
        pass

    def update(self, traj, objective):
        est = objective.value(self._est)
        self.model.episode(objective, traj=traj)
        return est, 1, 1, self.rate

    def audit(self) -> dict:
        return {}

    @property
    def estimate(self):
        return self.model.kernel


class _RandomLearner:
    """A fresh random policy every episode; a kernel estimator runs alongside for the estimated loss."""

    def __init__(self, config, env, rng):
        self.rng = rng
        self.shape = env.shape
        self.estimator = KernelEstimator(env.shape, env.successor, rng=rng, capacity=config.episodes)

    def play(self, t, kernel, objective_later):
        self._policy = random_policy(self.shape, self.rng)
        return self._policy

    def record_instances(self, t, kernel, objective):
        pass

    def update(self, traj, objective):
        est = objective.value(induce_occupancy(self._policy, self.estimator.estimate, self.shape))
        self.estimator.step(traj)
        return est, 0, 0, 0.0

    def audit(self) -> dict:
        return {"estimator_worst_regret": self.estimator.worst_regret(),
                "estimator_regret_bound": self.estimator.regret_bound()}

    @property
    def estimate(self):
        return self.estimator.estimate


# --------------------------------------------------------------------------- traces


@dataclass
class RegretTrace:
    """Per-episode losses of one run; ``comparators`` maps each mode to its per-episode losses."""

    true_loss: np.ndarray
    est_loss: np.ndarray
    comparators: dict[str, np.ndarray]
    headline: str
    n_instances: np.ndarray
    best_s: np.ndarray
    best_lambda: np.ndarray
    components: dict[str, float] = field(default_factory=dict)

    @property
    def episodes(self) -> int:
        return len(self.true_loss)

    @property
    def comparator_loss(self) -> np.ndarray:
        return self.comparators[self.headline]

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.true_loss - self.comparator_loss)

    def regret(self, mode: str | None = None) -> float:
        comp = self.comparators[mode or self.headline]
        return float(np.sum(self.true_loss - comp))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        rows = zip(self.true_loss.tolist(), self.est_loss.tolist(), self.comparator_loss.tolist(),
                   self.cum_regret.tolist(), self.n_instances.tolist(), self.best_s.tolist(),
                   self.best_lambda.tolist())
        for t, (true, est, comp, cum, n, s, lam) in enumerate(rows, start=1):
            buf.write(f"{t},{true!r},{est!r},{comp!r},{cum!r},{n},{s},{lam!r}\n")
        return buf.getvalue()


def decompose(true_loss, est_loss, comparator, intervals, instance_true=None, instance_est=None) -> dict:
    """Split the total regret into estimation, meta, instance-estimation and black-box parts.

    ``intervals`` are 0-based ``(start, stop)`` ranges covering the run. For a
    meta learner ``instance_true[i]``/``instance_est[i]`` hold the per-episode
    losses (one column per rate) of the instance born at the start of interval
    ``i``; the reference rate is the one with the smallest true loss on the
    interval. Without instance data the run is split into estimation and
    optimisation only. The parts add up to ``total`` up to rounding.
    """
    true_loss = np.asarray(true_loss, dtype=float)
    est_loss = np.asarray(est_loss, dtype=float)
    comparator = np.asarray(comparator, dtype=float)
    out = {"total": float(np.sum(true_loss - comparator)), "estimation": float(np.sum(true_loss - est_loss))}
    if instance_true is None:
        out["optimisation"] = float(np.sum(est_loss - comparator))
        return out
    meta = inst_est = blackbox = 0.0
    rates = []
    for i, (a, b) in enumerate(intervals):
        it = np.asarray(instance_true[i], dtype=float)
        ie = np.asarray(instance_est[i], dtype=float)
        k = int(np.argmin(it.sum(axis=0)))
        rates.append(k)
        meta += float(np.sum(est_loss[a:b] - ie[:, k]))
        inst_est += float(np.sum(ie[:, k] - it[:, k]))
        blackbox += float(np.sum(it[:, k] - comparator[a:b]))
    out.update(meta=meta, instance_estimation=inst_est, black_box=blackbox)
    out["reference_rates"] = rates
    return out


@dataclass
class RunResult:
    config: ExperimentConfig
    seed: int
    learner: str
    trace: RegretTrace
    summary: dict
    comparator_results: dict[str, ComparatorResult]
    csv_path: Path | None = None


def _intervals(config: ExperimentConfig, env: Environment) -> list[tuple[int, int]]:
    if config.environment == "piecewise":
        return env.piece_bounds()
    T = config.episodes
    edges = np.linspace(0, T, config.pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _l1_radius(num_states: int, samples: int, cells: int, delta: float) -> float:
    """L1 deviation radius of an empirical law, union-bounded over ``cells``, at confidence ``1 - delta``."""
    if samples <= 0:
        return float("inf")
    return math.sqrt(2.0 * (num_states * math.log(2.0) + math.log(cells / delta)) / samples)


def run_experiment(config: ExperimentConfig, seed: int | None = None, learner: str | None = None,
                   out_dir=None, write: bool = True) -> RunResult:
    """Play one seeded run; optionally write ``<learner>_T<T>_seed<seed>.csv`` plus a summary JSON."""
    seed = config.seeds[0] if seed is None else int(seed)
    learner = learner or config.learner
    env_rng, adv_rng, sample_rng, learner_rng = _streams(seed)
    env = generate_environment(config, env_rng)
    shape = env.shape
    T = config.episodes
    objectives = build_objectives(config, env, adv_rng)
    kernels = env.kernels()
    intervals = _intervals(config, env)

    if learner == "metacurl":
        agent = _MetaLearner(config, env, learner_rng, [(a + 1, b) for a, b in intervals])
    elif learner == "greedy-mdcurl-single":
        agent = _SingleLearner(config, env, learner_rng)
    elif learner == "random-policy":
        agent = _RandomLearner(config, env, learner_rng)
    else:
        raise ValueError(f"unknown learner {learner!r}")

    true_loss = np.empty(T)
    est_loss = np.empty(T)
    n_instances = np.zeros(T, dtype=np.int64)
    best_s = np.zeros(T, dtype=np.int64)
    best_lambda = np.zeros(T)
    policies = np.empty((T,) + shape.policy_shape)
    for t in range(T):
        kernel = kernels[t]
        policy = agent.play(t + 1, kernel, None)
        policies[t] = policy
        traj = sample_episode(policy, env.dynamics(t), shape, sample_rng, episode=t + 1)
        objective = objectives[t]  # revealed only now
        true_loss[t] = objective.value(induce_occupancy(policy, kernel, shape))
        agent.record_instances(t + 1, kernel, objective)
        est_loss[t], n_instances[t], best_s[t], best_lambda[t] = agent.update(traj, objective)
        if (t + 1) % max(T // 10, 1) == 0:
            log.debug("episode %d/%d true loss %.4f", t + 1, T, true_loss[t])

    comparator_results = {mode: oracle_comparators(kernels, objectives, shape, mode) for mode in MODES}
    trace = RegretTrace(true_loss, est_loss, {m: r.losses for m, r in comparator_results.items()},
                        config.comparator, n_instances, best_s, best_lambda)
    if isinstance(agent, _MetaLearner):
        inst_true = [np.array(agent.tracked[a + 1]["true"]) for a, _ in intervals]
        inst_est = [np.array(agent.tracked[a + 1]["est"]) for a, _ in intervals]
        trace.components = decompose(true_loss, est_loss, trace.comparator_loss, intervals, inst_true, inst_est)
    else:
        trace.components = decompose(true_loss, est_loss, trace.comparator_loss, intervals)

    delta_p, delta_inf = env.variation()
    last_a, last_b = intervals[-1]
    cells = shape.horizon * shape.num_states * shape.num_actions
    summary = {
        "learner": learner,
        "seed": seed,
        "episodes": T,
        "delta_p": delta_p,
        "delta_p_inf": delta_inf,
        "delta_pi_star": {m: r.variation for m, r in comparator_results.items()},
        "comparator": config.comparator,
        "total_regret": trace.regret(),
        "regret": {m: trace.regret(m) for m in MODES},
        "estimation_abs": float(np.sum(np.abs(true_loss - est_loss))),
        "decomposition": trace.components,
        "final_kernel_l1": float(np.abs(agent.estimate - kernels[-1]).sum(-1).max()),
        "last_interval_l1_radius": _l1_radius(shape.num_states, last_b - last_a, cells, config.confidence),
        "oracle_max_gap": max(r.max_gap for r in comparator_results.values()),
    }
    summary.update(agent.audit())
    result = RunResult(config, seed, learner, trace, summary, comparator_results)
    if write:
        result.csv_path = write_result(result, out_dir or config.output)
    return result


def write_result(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    stem = f"{result.learner}_T{result.config.episodes}_seed{result.seed}"
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{stem}.csv"
        csv_path.write_text(result.trace.to_csv())
        (out / f"{stem}.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
        if result.config.plots:
            plot_trace(result.trace, out / f"{stem}.png", title=stem)
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return csv_path


def plot_trace(trace: RegretTrace, path, title: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    t = np.arange(1, trace.episodes + 1)
    for mode, comp in trace.comparators.items():
        ax.plot(t, np.cumsum(trace.true_loss - comp), label=mode)
    ax.set_xlabel("episode")
    ax.set_ylabel("cumulative regret")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loglog_slope(horizons, regrets) -> float:
    """Least-squares slope of ``log regret`` against ``log T``; NaN if any regret is not positive."""
    horizons = np.asarray(horizons, dtype=float)
    regrets = np.asarray(regrets, dtype=float)
    if len(horizons) < 2 or np.any(regrets <= 0):
        return float("nan")
    return float(np.polyfit(np.log(horizons), np.log(regrets), 1)[0])


def run_sweep(config: ExperimentConfig, learner: str | None = None, out_dir=None, write: bool = True) -> dict:
    """Run every seed at every horizon in ``sweep_episodes`` and fit the regret exponent on seed medians."""
    learner = learner or config.learner
    horizons = config.sweep_episodes or [config.episodes]
    table = {}
    for T in horizons:
        cfg = config.with_episodes(T)
        regrets = [run_experiment(cfg, s, learner, out_dir, write).summary["total_regret"] for s in config.seeds]
        table[T] = regrets
    medians = [float(np.median(table[T])) for T in horizons]
    summary = {
        "learner": learner,
        "comparator": config.comparator,
        "horizons": list(horizons),
        "seeds": list(config.seeds),
        "regrets": {str(T): table[T] for T in horizons},
        "median_regret": medians,
        "slope": loglog_slope(horizons, medians),
    }
    if write:
        out = Path(out_dir or config.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"sweep_{learner}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
