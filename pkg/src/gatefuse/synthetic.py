"""Synthetic multimodal social networks with controllable per-modality
reliability and planted conflict users.

Graph side: a planted partition per relation. Each node draws
Poisson(mean_out_degree) out-edges; each edge lands inside the node's
community with probability rho_graph, otherwise uniformly outside it, so
the realized intra-community edge fraction tracks rho_graph directly.

Text side: each user emits tokens_per_user tokens from a mixture of a
class-signature vocabulary and a shared noise vocabulary. Both reliability
knobs are calibrated so 0.5 means chance level for a binary task: the
signature share of tokens is max(0, 2*rho_text - 1), which makes
rho_text <= 0.5 pure noise and rho_text = 1 fully class-disjoint text.
Conflict users draw their signature tokens from the *wrong* class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DatasetBundle, UNLABELED
from .graph import build_graph, summed_binary_adjacency


@dataclass
class SynthConfig:
    n: int = 2000
    relations: int = 3
    classes: int = 2
    rho_graph: float = 0.9
    rho_text: float = 0.9
    conflict_fraction: float = 0.0
    label_fraction: float = 0.5
    tokens_per_user: int = 30
    signature_words: int = 50
    noise_words: int = 200
    mean_out_degree: float = 5.0
    vector_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("rho_graph", "rho_text", "conflict_fraction",
                     "label_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.n < 20:
            raise ValueError(f"n must be at least 20, got {self.n}")
        if self.classes < 2 or self.classes > self.n:
            raise ValueError(f"need 2 <= classes <= n, got {self.classes}")
        if self.relations < 1:
            raise ValueError("need at least one relation")


@dataclass
class SynthTruth:
    labels: np.ndarray            # true class of every node
    text_class: np.ndarray        # class whose vocabulary generated the text
    conflict: np.ndarray          # bool: text drawn from the wrong class
    graph_informative: np.ndarray # bool per user
    text_informative: np.ndarray  # bool per user


def signature_share(rho_text: float) -> float:
    """Fraction of tokens drawn from the signature vocabulary.

    Calibrated so 0.5 is chance level: at or below 0.5 every token is
    noise; at 1.0 every token is a class-signature word.
    """
    return max(0.0, 2.0 * rho_text - 1.0)


def class_vocabulary(cfg: SynthConfig, c: int) -> list[str]:
    return [f"c{c}w{i:03d}" for i in range(cfg.signature_words)]


def noise_vocabulary(cfg: SynthConfig) -> list[str]:
    return [f"nz{i:04d}" for i in range(cfg.noise_words)]


def full_vocabulary(cfg: SynthConfig) -> list[str]:
    vocab: list[str] = []
    for c in range(cfg.classes):
        vocab.extend(class_vocabulary(cfg, c))
    vocab.extend(noise_vocabulary(cfg))
    return vocab


def _planted_edges(rng: np.random.Generator, labels: np.ndarray,
                   cfg: SynthConfig, relation: str) -> list[tuple[int, int, str]]:
    n = cfg.n
    members = [np.flatnonzero(labels == c) for c in range(cfg.classes)]
    outsiders = [np.flatnonzero(labels != c) for c in range(cfg.classes)]
    degrees = rng.poisson(cfg.mean_out_degree, size=n)
    src = np.repeat(np.arange(n), degrees)
    total = src.size
    intra = rng.random(total) < cfg.rho_graph
    dst = np.empty(total, dtype=np.int64)
    src_class = labels[src]
    for c in range(cfg.classes):
        inside = intra & (src_class == c)
        outside = ~intra & (src_class == c)
        if inside.any():
            dst[inside] = members[c][rng.integers(0, members[c].size,
                                                  inside.sum())]
        if outside.any():
            dst[outside] = outsiders[c][rng.integers(0, outsiders[c].size,
                                                     outside.sum())]
    keep = src != dst  # drop accidental self-edges
    return [(int(s), int(d), relation) for s, d in zip(src[keep], dst[keep])]


def generate_synthetic(cfg: SynthConfig) -> tuple[DatasetBundle, SynthTruth]:
    """Deterministic per seed; labels are balanced across classes."""
    rng = np.random.default_rng(cfg.seed)
    n, c_count = cfg.n, cfg.classes

    labels = rng.permutation(np.arange(n) % c_count)

    edges: list[tuple[int, int, str]] = []
    relation_names = [f"rel{i}" for i in range(cfg.relations)]
    for name in relation_names:
        edges.extend(_planted_edges(rng, labels, cfg, name))
    graph = build_graph(edges, n, relation_names=relation_names)

    n_conflict = int(round(cfg.conflict_fraction * n))
    conflict = np.zeros(n, dtype=bool)
    conflict[rng.choice(n, size=n_conflict, replace=False)] = True
    text_class = np.where(conflict, (labels + 1) % c_count, labels)

    share = signature_share(cfg.rho_text)
    sig_draw = rng.random((n, cfg.tokens_per_user)) < share
    sig_idx = rng.integers(0, cfg.signature_words, size=(n, cfg.tokens_per_user))
    noise_idx = rng.integers(0, cfg.noise_words, size=(n, cfg.tokens_per_user))
    noise_vocab = noise_vocabulary(cfg)
    sig_vocab = [class_vocabulary(cfg, c) for c in range(c_count)]
    texts: list[list[str]] = []
    for u in range(n):
        vocab_u = sig_vocab[text_class[u]]
        texts.append([vocab_u[sig_idx[u, t]] if sig_draw[u, t]
                      else noise_vocab[noise_idx[u, t]]
                      for t in range(cfg.tokens_per_user)])

    n_labeled = int(round(cfg.label_fraction * n))
    observed = np.full(n, UNLABELED, dtype=np.int64)
    shown = rng.choice(n, size=n_labeled, replace=False)
    observed[shown] = labels[shown]

    bundle = DatasetBundle(
        graph=graph,
        texts=texts,
        features=None,
        labels=observed,
        class_names=[f"class{c}" for c in range(c_count)],
        relation_names=relation_names,
        task="synthetic-node-classification",
    )
    truth = SynthTruth(
        labels=labels,
        text_class=text_class,
        conflict=conflict,
        graph_informative=np.full(n, cfg.rho_graph > 1.0 / c_count),
        text_informative=(~conflict) & (share > 0.0),
    )
    return bundle, truth


def synthetic_word_vectors(cfg: SynthConfig) -> tuple[dict[str, int], np.ndarray]:
    """A random unit-scale vector table over the generator's vocabulary,
    seeded independently of the dataset draw."""
    vocab = full_vocabulary(cfg)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    vectors = rng.normal(0.0, 1.0, size=(len(vocab), cfg.vector_dim))
    return {tok: i for i, tok in enumerate(vocab)}, vectors


# ---------------------------------------------------------------------------
# generative-model-optimal reference classifiers
# ---------------------------------------------------------------------------


def bayes_oracle_accuracy(bundle: DatasetBundle, truth: SynthTruth,
                          cfg: SynthConfig) -> dict[str, float]:
    """Accuracy of the per-modality optimal classifiers on this sample.

    Graph: per-node log-likelihood ratio of intra/inter neighbor counts
    under the planted-partition edge model. Text: naive Bayes over the
    signature/noise vocabulary mixture. Ties break toward class 0.
    """
    n, c_count = cfg.n, cfg.classes
    labels = truth.labels

    # --- graph side: neighbor class counts over the undirected link union
    union = summed_binary_adjacency(bundle.graph)
    onehot = np.zeros((n, c_count))
    onehot[np.arange(n), labels] = 1.0
    counts = union @ onehot  # counts[u, c] = neighbors of u in class c
    eps = 1e-12
    p_in = min(max(cfg.rho_graph, eps), 1.0 - eps)
    p_out = (1.0 - p_in) / (c_count - 1)
    scores = np.zeros((n, c_count))
    for c in range(c_count):
        same = counts[:, c]
        other = counts.sum(axis=1) - same
        scores[:, c] = same * np.log(p_in) + other * np.log(p_out)
    graph_acc = float(np.mean(scores.argmax(axis=1) == labels))

    # --- text side: per-class signature token counts
    share = signature_share(cfg.rho_text)
    sig_counts = np.zeros((n, c_count))
    noise_counts = np.zeros(n)
    for u, tokens in enumerate(bundle.texts):
        for tok in tokens:
            if tok.startswith("c") and "w" in tok:
                sig_counts[u, int(tok[1:tok.index("w")])] += 1
            else:
                noise_counts[u] += 1
    log_sig = np.log(share / cfg.signature_words) if share > 0 else -np.inf
    log_noise = (np.log((1.0 - share) / cfg.noise_words)
                 if share < 1.0 else -np.inf)
    tscores = np.zeros((n, c_count))
    for c in range(c_count):
        own = sig_counts[:, c]
        foreign = sig_counts.sum(axis=1) - own
        tscores[:, c] = np.where(foreign > 0, -np.inf, 0.0)
        if share > 0:
            tscores[:, c] += own * log_sig
        elif own.max() > 0:
            tscores[:, c] = np.where(own > 0, -np.inf, tscores[:, c])
        if share < 1.0:
            tscores[:, c] += noise_counts * log_noise
        else:
            tscores[:, c] += np.where(noise_counts > 0, -np.inf, 0.0)
    text_acc = float(np.mean(tscores.argmax(axis=1) == labels))
    return {"graph": graph_acc, "text": text_acc}


def text_oracle_predictions(bundle: DatasetBundle, cfg: SynthConfig) -> np.ndarray:
    """Class with the most signature tokens per user; ties go to class 0."""
    n, c_count = cfg.n, cfg.classes
    sig_counts = np.zeros((n, c_count))
    for u, tokens in enumerate(bundle.texts):
        for tok in tokens:
            if tok.startswith("c") and "w" in tok:
                sig_counts[u, int(tok[1:tok.index("w")])] += 1
    return sig_counts.argmax(axis=1)
