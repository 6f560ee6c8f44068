#!/usr/bin/env python3
"""Show how the synthetic generator's two reliability knobs control how much
each modality can possibly reveal about the labels, measured by the
per-modality optimal (generative-model-aware) classifiers."""

from gatefuse.synthetic import SynthConfig, bayes_oracle_accuracy, generate_synthetic

print("rho_graph  rho_text  ->  graph oracle  text oracle")
for rho_graph, rho_text in [(0.5, 0.5), (0.7, 0.7), (0.9, 0.9),
                            (1.0, 0.5), (0.5, 1.0), (0.95, 0.75)]:
    cfg = SynthConfig(n=1500, relations=2, rho_graph=rho_graph,
                      rho_text=rho_text, seed=0)
    bundle, truth = generate_synthetic(cfg)
    acc = bayes_oracle_accuracy(bundle, truth, cfg)
    print(f"   {rho_graph:.2f}      {rho_text:.2f}          "
          f"{acc['graph']:.3f}        {acc['text']:.3f}")

print()
print("Both knobs are calibrated so 0.5 is chance level for a binary task:")
print("a 0.5-reliability modality carries no label signal at all, and 1.0")
print("is fully informative (all edges intra-community / all tokens from")
print("the class's signature vocabulary).")

print()
cfg = SynthConfig(n=1500, relations=2, rho_graph=0.9, rho_text=1.0,
                  conflict_fraction=0.25, seed=0)
bundle, truth = generate_synthetic(cfg)
acc = bayes_oracle_accuracy(bundle, truth, cfg)
n_conf = int(truth.conflict.sum())
print(f"With conflict_fraction=0.25, {n_conf} of {cfg.n} users emit text "
      f"drawn from the wrong class's vocabulary;")
print(f"the text oracle drops to {acc['text']:.3f} (it is fooled on "
      "exactly the conflict users) while the graph oracle stays at "
      f"{acc['graph']:.3f}.")
