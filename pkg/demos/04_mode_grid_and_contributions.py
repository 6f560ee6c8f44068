#!/usr/bin/env python3
"""Run the full mode grid over several seeds on a conflict-planted dataset,
then inspect the per-user contribution records the way the CLI exports
them. A quarter of the users emit text drawn from the wrong class's
vocabulary, so the gate has a real reason to lean on the graph."""

import numpy as np

from gatefuse.encoders import pool_word_vectors
from gatefuse.fusion import contribution_of
from gatefuse.synthetic import SynthConfig, generate_synthetic, synthetic_word_vectors
from gatefuse.training import TrainConfig, grid_tsv, make_split, run_grid, train

cfg = SynthConfig(n=600, relations=1, mean_out_degree=3.0, rho_graph=0.9,
                  rho_text=0.9, conflict_fraction=0.25, label_fraction=0.3,
                  seed=1)
bundle, truth = generate_synthetic(cfg)
index, table = synthetic_word_vectors(cfg)
features = pool_word_vectors(bundle.texts, index, table)

modes = ["text", "link", "simple", "fixed", "camue"]
records, reports = run_grid(bundle.graph, features, bundle.labels, modes,
                            seeds=range(3))

print("aggregate over 3 seeds (accuracy ; macro-F1):")
for mode in modes:
    rep = reports[mode]
    print(f"  {mode:8s} {rep}   (std {rep.accuracy_std:.3f}, "
          f"max {rep.accuracy_max:.3f})")

print()
print("per-run table, first lines:")
print("\n".join(grid_tsv(records).splitlines()[:5]))

# contribution records for a few users from one trained gated model
split = make_split(bundle.labels, seed=0)
res = train(bundle.graph, features, split, TrainConfig(mode="camue", seed=0))
print()
print("user  alpha  beta   dominant  conflict-planted?")
for user in range(8):
    a, b = contribution_of(res.gate, user)
    print(f"{user:4d}  {a:.3f}  {b:.3f}  {'graph' if a > b else 'text ':5s}"
          f"     {'yes' if truth.conflict[user] else 'no'}")

alpha = res.gate.alpha
print(f"\nalpha quartiles across all users: "
      f"{np.percentile(alpha, [25, 50, 75]).round(3)}")
print(f"fraction of users with alpha > beta: "
      f"{100 * np.mean(alpha > res.gate.beta):.1f}%")
print("\nWith a quarter of the text channel poisoned, every user leans")
print("graph-ward, but by individually different amounts.")
