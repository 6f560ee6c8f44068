#!/usr/bin/env python3
"""The headline behavior: when one modality is pure noise, naive fusion is
dragged below the single-modality model, while the gated model learns to
route around the noise and exports per-user weights that say so."""

import numpy as np

from gatefuse.encoders import pool_word_vectors
from gatefuse.synthetic import SynthConfig, generate_synthetic, synthetic_word_vectors
from gatefuse.training import TrainConfig, evaluate, make_split, prepare_inputs, train

cfg = SynthConfig(n=800, relations=2, rho_graph=0.95, rho_text=0.5,
                  label_fraction=0.5, seed=0)
bundle, truth = generate_synthetic(cfg)
index, table = synthetic_word_vectors(cfg)
features = pool_word_vectors(bundle.texts, index, table)
inputs = prepare_inputs(bundle.graph, features)
split = make_split(bundle.labels, seed=0)

print(f"dataset: n={cfg.n}, graph reliability {cfg.rho_graph}, "
      f"text reliability {cfg.rho_text} (= pure noise)")
print()
print("mode      test accuracy ; macro-F1")

results = {}
for mode in ("link", "text", "simple", "camue"):
    res = train(bundle.graph, features, split, TrainConfig(mode=mode, seed=0),
                inputs=inputs)
    rep = evaluate(res.model, inputs, split, "test")
    results[mode] = res
    print(f"{mode:8s}  {rep}")

gate = results["camue"].gate
print()
print(f"gated model's learned weights: mean alpha (graph) = "
      f"{gate.alpha.mean():.3f}, mean beta (text) = {gate.beta.mean():.3f}")
print(f"users trusting the graph more (alpha > beta): "
      f"{100 * np.mean(gate.alpha > gate.beta):.1f}%")
print()
print("Naive fusion entangles the noise text with the graph and loses")
print("accuracy; the gate discovers per user that text deserves ~zero")
print("weight, matching the link-only model while staying fused.")
