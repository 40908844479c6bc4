"""
Test-time optimisation
======================

Roll out a noisy copy of an expert trajectory many times against a segmented
point cloud, score each rollout by how many obstacle points it sweeps through,
and keep the lowest-scoring one.
"""

# %%
import numpy as np

from mpforge.harness.config import Config
from mpforge.harness.evaluation import tto_benchmark

# %% Ten shelf problems, 100 samples each, action noise 0.02 rad.
bench = tto_benchmark(10, Config(), first_seed=0, noise_std=0.02, n_samples=100)
print(f"single rollout success {bench.single_success_rate:.0%}, selected rollout success {bench.tto_success_rate:.0%}")

# %% Per problem: how many samples were collision-free, and the score of the one kept.
for p in bench.problems:
    free = int(np.sum(np.logical_not(p.rollout_collision)))
    print(f"seed {p.seed}: {free}/{len(p.scores)} collision-free samples, kept score {p.scores[p.selected_index]}")

# %% Scores across all rollouts, binned by decade.
for bin_label, count in bench.score_histogram().items():
    print(f"{bin_label:>16} {count}")
