"""
Greedy MD-CURL on a fixed problem
=================================

One black-box learner with learning rate 1/sqrt(T) faces a stationary MDP
and a fixed linear loss. Its regret against the dynamic-programming optimum
grows like sqrt(T) up to logarithmic factors.
"""
import numpy as np

from metacurl.harness import ExperimentConfig, run_experiment
from metacurl.harness.runner import loglog_slope

config = ExperimentConfig(num_states=3, num_actions=2, horizon=3, pieces=1, comparator="best-fixed")

horizons = [250, 500, 1000, 2000]
regrets = []
for T in horizons:
    runs = [run_experiment(config.with_episodes(T), seed, "greedy-mdcurl-single", write=False) for seed in range(5)]
    regrets.append(float(np.median([r.summary["total_regret"] for r in runs])))
    print(f"T={T:5d}  median regret {regrets[-1]:7.2f}  regret/sqrt(T) {regrets[-1] / np.sqrt(T):.3f}")

print("log-log slope:", round(loglog_slope(horizons, regrets), 3))
