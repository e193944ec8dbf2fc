"""
Restarts under abrupt change
============================

The kernel switches three times and the loss flips sign at every switch.
MetaCURL keeps spawning fresh Greedy MD-CURL instances and shifts weight to
the young ones after each change; a single never-restarted instance carries
its stale policy and kernel estimate along.
"""
import numpy as np

from metacurl import MetaCURL
from metacurl.harness import ExperimentConfig, generate_environment, run_experiment
from metacurl.harness.runner import build_objectives
from metacurl.mdp import sample_episode

config = ExperimentConfig(num_states=2, num_actions=2, horizon=2, episodes=800, pieces=4,
                          objective="sign-flipping-linear", comparator="piecewise-optimal")

meta = run_experiment(config, 0, "metacurl", write=False)
single = run_experiment(config, 0, "greedy-mdcurl-single", write=False)

for name, res in (("metacurl", meta), ("single", single)):
    cum = res.trace.cum_regret
    marks = ", ".join(f"{cum[t - 1]:6.1f}" for t in (200, 400, 600, 800))
    print(f"{name:9s} cumulative regret at 200/400/600/800: {marks}")

# %%
# Drive the meta learner by hand and watch the weight mass held by instances
# born after the most recent switch.
env = generate_environment(config, 1)
objectives = build_objectives(config, env, 2)
learner = MetaCURL(env.shape, env.successor, config.episodes, rng=3)
rng = np.random.default_rng(4)
switches = [a for a, _ in env.piece_bounds()]
for t, objective in enumerate(objectives):
    policy = learner.play()
    learner.update(sample_episode(policy, env.dynamics(t), env.shape, rng, episode=t + 1), objective)
    if (t + 1) % 100 == 0:
        last = max(s for s in switches if s <= t) + 1
        young = learner.weights()[learner.births() >= last].sum()
        print(f"t={t + 1:4d}  weight on instances born since episode {last:3d}: {young:.3f}")

# %%
# Regret split into estimation, meta, instance-estimation and black-box parts.
parts = meta.trace.components
print({k: round(v, 2) for k, v in parts.items() if k != "reference_rates"})
