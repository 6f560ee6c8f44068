#!/usr/bin/env python3
"""Drive the command-line pipeline end to end in a temp directory:
synthesize -> embed text -> train -> evaluate -> export contribution map."""

import tempfile
from pathlib import Path

from gatefuse.cli import main

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    data = root / "data"
    run = root / "run"
    contrib = root / "contrib"

    steps = [
        ["synth", "--n", "300", "--relations", "2", "--rho-graph", "0.95",
         "--rho-text", "0.5", "--label-fraction", "1.0", "--seed", "0",
         "--out", str(data)],
        ["embed-text", "--texts", str(data / "texts.tsv"),
         "--vectors", str(data / "vectors.txt"),
         "--out", str(data / "embeddings.tsv")],
        ["train", "--data", str(data), "--mode", "camue",
         "--text-encoder", "precomputed", "--seed", "0",
         "--epochs", "80", "--out", str(run)],
        ["eval", "--checkpoint", str(run / "model.ckpt"),
         "--data", str(data)],
        ["contribmap", "--checkpoint", str(run / "model.ckpt"),
         "--data", str(data), "--out", str(contrib)],
    ]
    for argv in steps:
        print(f"\n$ gatefuse {' '.join(argv)}")
        code = main(argv)
        assert code == 0, f"command failed: {argv}"

    print("\nfirst contribution records:")
    lines = (contrib / "contributions.tsv").read_text().splitlines()
    print("\n".join(lines[:6]))
