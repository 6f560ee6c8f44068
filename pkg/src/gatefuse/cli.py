"""Command-line entry point: synthesize data, embed text, train, evaluate,
and export per-user contribution maps.

Every command is deterministic under a fixed --seed; all failures print a
single line to stderr prefixed with "error:" and exit nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    infer_n,
    load_edges,
    load_labels,
    load_texts,
    load_word_vectors,
    write_edges,
    write_embedding_matrix,
    write_labels,
    write_texts,
    write_word_vectors,
)
from .encoders import TextEncoderConfig, build_text_features, pool_word_vectors
from .fusion import contribution_of
from .synthetic import SynthConfig, generate_synthetic, synthetic_word_vectors
from .training import (
    EvalReport,
    RunMetrics,
    TrainConfig,
    evaluate,
    load_checkpoint,
    make_split,
    prepare_inputs,
    save_checkpoint,
    train,
)

MODE_CHOICES = ("camue", "fixed", "simple", "link", "text")


def _fmt(x: float) -> str:
    return repr(float(x))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_data(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get("GATEFUSE_DATA_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _write_manifest(out_dir: Path, command: str, config: dict,
                    input_files: list[Path], started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "code_version": __version__,
        "dataset_checksums": {p.name: _sha256(p) for p in input_files
                              if p.exists()},
        "duration_s": round(time.time() - started, 3),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# dataset directory loading shared by train / eval / contribmap
# ---------------------------------------------------------------------------


def _load_dataset(data_dir: Path, text_encoder: str | None, vectors: str | None,
                  embeddings: str | None, n_override: int | None):
    edges_path = data_dir / "edges.tsv"
    labels_path = data_dir / "labels.tsv"
    if not edges_path.exists():
        raise FileNotFoundError(f"no edges.tsv under {data_dir}")
    used = [edges_path, labels_path]
    n = n_override
    if n is None:
        probe = [edges_path, labels_path]
        texts_path = data_dir / "texts.tsv"
        if texts_path.exists():
            probe.append(texts_path)
        n = infer_n(*probe)
    graph = load_edges(edges_path, n)
    labels, class_names = load_labels(labels_path, n)

    features = None
    if text_encoder == "pooled":
        vec_path = Path(vectors) if vectors else data_dir / "vectors.txt"
        texts_path = data_dir / "texts.tsv"
        tokens = load_texts(texts_path, n)
        features = build_text_features(
            TextEncoderConfig("pooled", str(vec_path)), tokens, n)
        used += [vec_path, texts_path]
    elif text_encoder == "precomputed":
        emb_path = Path(embeddings) if embeddings else data_dir / "embeddings.tsv"
        features = build_text_features(
            TextEncoderConfig("precomputed", str(emb_path)), None, n)
        used.append(emb_path)
    return graph, features, labels, class_names, used


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.time()
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise FileExistsError(f"output dir {out} is not empty; use --force")
    out.mkdir(parents=True, exist_ok=True)
    cfg = SynthConfig(n=args.n, relations=args.relations, classes=args.classes,
                      rho_graph=args.rho_graph, rho_text=args.rho_text,
                      conflict_fraction=args.conflict,
                      label_fraction=args.label_fraction, seed=args.seed)
    bundle, truth = generate_synthetic(cfg)
    write_edges(out / "edges.tsv", bundle.graph)
    write_labels(out / "labels.tsv", bundle.labels, bundle.class_names)
    write_texts(out / "texts.tsv", [" ".join(t) for t in bundle.texts])
    with open(out / "truth.tsv", "w", encoding="utf-8") as fh:
        for u in range(cfg.n):
            fh.write(f"{u}\t{bundle.class_names[truth.labels[u]]}\t"
                     f"{bundle.class_names[truth.text_class[u]]}\t"
                     f"{int(truth.conflict[u])}\t"
                     f"{int(truth.graph_informative[u])}\t"
                     f"{int(truth.text_informative[u])}\n")
    index, vectors = synthetic_word_vectors(cfg)
    write_word_vectors(out / "vectors.txt", index, vectors)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    _write_manifest(out, "synth", config, [], started)
    print(f"wrote synthetic dataset: n={cfg.n} relations={cfg.relations} "
          f"edges={bundle.graph.num_edges()} -> {out}")
    return 0


def _fill_train_flags(args) -> tuple[str, str, str]:
    """Resolve mode/encoder flags, rejecting incompatible combinations."""
    mode = args.mode or "camue"
    if mode == "text" and args.graph_encoder is not None:
        raise ValueError("--mode text does not take --graph-encoder")
    if mode == "link" and args.text_encoder is not None:
        raise ValueError("--mode link does not take --text-encoder")
    graph_encoder = args.graph_encoder or "rgcn"
    if mode == "simple" and graph_encoder != "rgcn":
        raise ValueError("--mode simple requires --graph-encoder rgcn")
    text_encoder = args.text_encoder or "pooled"
    if mode == "link":
        text_encoder = None
    return mode, graph_encoder, text_encoder


def cmd_train(args) -> int:
    started = time.time()
    mode, graph_encoder, text_encoder = _fill_train_flags(args)
    data_dir = _resolve_data(args.data)
    graph, features, labels, class_names, used = _load_dataset(
        data_dir, text_encoder, args.vectors, args.embeddings, args.n)
    cfg = TrainConfig(lr=args.lr, hidden=args.hidden, dropout=args.dropout,
                      epochs=args.epochs, patience=args.patience,
                      seed=args.seed, mode=mode, lambda_=args.lambda_,
                      graph_encoder=graph_encoder)
    split = make_split(labels, seed=args.seed)
    result = train(graph, features, split, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", result.model, extra={
        "seed": args.seed,
        "class_names": class_names,
        "relation_names": graph.relation_names,
        "text_encoder": text_encoder,
    })
    r = result.report.runs[0]
    with open(out / "val_report.tsv", "w", encoding="utf-8") as fh:
        fh.write("seed\taccuracy\tf1\tf1_binary\tepochs_ran\tbest_epoch\n")
        fh.write(f"{args.seed}\t{_fmt(r.accuracy)}\t{_fmt(r.f1)}\t"
                 f"{_fmt(r.f1_binary)}\t{result.epochs_ran}\t"
                 f"{result.best_epoch}\n")
    config = {k: v for k, v in vars(args).items() if k != "func"}
    config.update(mode=mode, graph_encoder=graph_encoder,
                  text_encoder=text_encoder)
    _write_manifest(out, "train", config, used, started)
    print(f"mode={mode} seed={args.seed} validation: {result.report} "
          f"(epochs={result.epochs_ran}, best={result.best_epoch})")
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    ckpt_path = Path(args.checkpoint)
    model, meta = load_checkpoint(ckpt_path)
    data_dir = _resolve_data(args.data)
    graph, features, labels, _, used = _load_dataset(
        data_dir, meta.get("text_encoder"), args.vectors, args.embeddings,
        args.n)
    if graph.n != meta["n"]:
        raise ValueError(f"checkpoint is for n={meta['n']}, dataset has "
                         f"n={graph.n}")
    inputs = prepare_inputs(graph, features)
    seeds = list(range(args.seeds)) if args.seeds else [meta.get("seed", 0)]
    runs: list[RunMetrics] = []
    for seed in seeds:
        split = make_split(labels, seed=seed)
        rep = evaluate(model, inputs, split, "test", seed=seed)
        runs.append(rep.runs[0])
    report = EvalReport(runs)
    for m in runs:
        print(f"seed={m.seed}: {m.accuracy:.3f} ; {m.f1:.3f}")
    if len(runs) > 1:
        print(f"mean over {len(runs)} seeds: {report.accuracy:.3f} "
              f"± {report.accuracy_std:.3f} ; {report.f1:.3f} "
              f"± {report.f1_std:.3f} (max acc {report.accuracy_max:.3f})")
    out_path = Path(args.out) if args.out else ckpt_path.with_suffix(".eval.tsv")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("seed\taccuracy\tf1\tf1_binary\n")
        for m in runs:
            fh.write(f"{m.seed}\t{_fmt(m.accuracy)}\t{_fmt(m.f1)}\t"
                     f"{_fmt(m.f1_binary)}\n")
        fh.write(f"mean\t{_fmt(report.accuracy)}\t{_fmt(report.f1)}\t\n")
        fh.write(f"std\t{_fmt(report.accuracy_std)}\t{_fmt(report.f1_std)}\t\n")
    return 0


def _load_subgroups(path: Path, n: int) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: want id<TAB>tag")
            node = int(parts[0])
            if not 0 <= node < n:
                raise ValueError(f"{path}:{lineno}: node id {node} out of range")
            groups.setdefault(parts[1], []).append(node)
    return groups


def cmd_contribmap(args) -> int:
    started = time.time()
    model, meta = load_checkpoint(Path(args.checkpoint))
    if meta["mode"] != "camue":
        raise ValueError("contribution map requires gated mode "
                         f"(checkpoint was trained with mode={meta['mode']})")
    data_dir = _resolve_data(args.data)
    graph, features, labels, class_names, used = _load_dataset(
        data_dir, meta.get("text_encoder"), args.vectors, args.embeddings,
        args.n)
    if graph.n != meta["n"]:
        raise ValueError(f"checkpoint is for n={meta['n']}, dataset has "
                         f"n={graph.n}")
    inputs = prepare_inputs(graph, features)
    gate = model.gate_output(inputs)
    pred = model.predict(inputs)

    groups = {"all": list(range(graph.n))}
    if args.subgroups:
        groups.update(_load_subgroups(Path(args.subgroups), graph.n))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = graph.node_names or [str(u) for u in range(graph.n)]
    tag_of: dict[int, list[str]] = {}
    for tag, members in groups.items():
        if tag == "all":
            continue
        for u in members:
            tag_of.setdefault(u, []).append(tag)
    with open(out / "contributions.tsv", "w", encoding="utf-8") as fh:
        fh.write("user\tname\talpha\tbeta\tpredicted\ttrue\ttags\n")
        for u in range(graph.n):
            a, b = contribution_of(gate, u)
            true = class_names[labels[u]] if labels[u] >= 0 else ""
            tags = ",".join(sorted(tag_of.get(u, [])))
            fh.write(f"{u}\t{names[u]}\t{_fmt(a)}\t{_fmt(b)}\t"
                     f"{class_names[pred[u]]}\t{true}\t{tags}\n")
    # plot-ready intensity grid: one row per user, alpha then beta, 0 = no
    # contribution, 1 = full contribution
    with open(out / "grid.tsv", "w", encoding="utf-8") as fh:
        for u in range(graph.n):
            a, b = contribution_of(gate, u)
            fh.write(f"{_fmt(a)}\t{_fmt(b)}\n")
    with open(out / "subgroups.tsv", "w", encoding="utf-8") as fh:
        fh.write("tag\tusers\tpct_alpha_gt_beta\n")
        for tag in sorted(groups):
            members = np.asarray(groups[tag], dtype=np.int64)
            pct = 100.0 * float(np.mean(gate.alpha[members] > gate.beta[members]))
            fh.write(f"{tag}\t{members.size}\t{_fmt(pct)}\n")
    config = {k: v for k, v in vars(args).items() if k != "func"}
    _write_manifest(out, "contribmap", config, used, started)
    print(f"wrote contribution map for {graph.n} users -> {out}")
    return 0


def cmd_embed_text(args) -> int:
    texts_path = Path(args.texts)
    n = args.n if args.n else infer_n(texts_path)
    index, table = load_word_vectors(Path(args.vectors))
    tokens = load_texts(texts_path, n)
    features = pool_word_vectors(tokens, index, table)
    write_embedding_matrix(Path(args.out), features)
    print(f"wrote {features.shape[0]}x{features.shape[1]} embedding matrix "
          f"-> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatefuse",
        description="Train and inspect gated graph+text user embedding models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multimodal dataset")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--relations", type=int, default=3)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--rho-graph", type=float, default=0.9, dest="rho_graph")
    p.add_argument("--rho-text", type=float, default=0.9, dest="rho_text")
    p.add_argument("--conflict", type=float, default=0.0)
    p.add_argument("--label-fraction", type=float, default=0.5,
                   dest="label_fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one fusion mode on a dataset dir")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=MODE_CHOICES, default=None)
    p.add_argument("--text-encoder", choices=("pooled", "precomputed"),
                   default=None, dest="text_encoder")
    p.add_argument("--graph-encoder", choices=("rgcn", "mlp"), default=None,
                   dest="graph_encoder")
    p.add_argument("--lambda", type=float, default=0.1, dest="lambda_")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--vectors", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on test splits")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seeds", type=int, default=0,
                   help="evaluate under this many split seeds (default: the "
                        "checkpoint's training seed only)")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--vectors", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("contribmap",
                       help="export per-user modality contributions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subgroups", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--vectors", default=None)
    p.add_argument("--embeddings", default=None)
    p.set_defaults(func=cmd_contribmap)

    p = sub.add_parser("embed-text",
                       help="pool word vectors into an embedding matrix")
    p.add_argument("--texts", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None)
    p.set_defaults(func=cmd_embed_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
