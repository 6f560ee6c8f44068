"""Per-user graph and text encoders mapping into a shared fusion dimension.

Graph side: a two-layer relation-weighted graph convolution over the
normalized multi-relation adjacencies (with a learnable per-node input
embedding table), or a three-layer MLP over raw adjacency rows.
Text side: pooled word vectors or externally precomputed embeddings,
followed by a three-layer MLP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autodiff import (
    GradTape,
    ShapeError,
    Tensor,
    add,
    add_bias,
    concat_cols,
    const_matmul,
    dropout,
    matmul,
    relu,
    row_softmax,
    scale,
    slice_cols,
    sparse_dense_matmul,
    split_cols,
)
from .graph import HeteroGraph, NormalizedGraph, summed_binary_adjacency


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


# ---------------------------------------------------------------------------
# relation-weighted graph convolution
# ---------------------------------------------------------------------------


class RgcnParams:
    """Two conv layers with per-relation weights plus softmax relation attention.

    ``embedding`` is the learnable per-node input table; pass features to
    :func:`rgcn_forward` instead to run the encoder on external inputs.
    """

    n_layers = 2

    def __init__(self, embedding: Tensor | None, rel_weights, self_weights,
                 att_logits):
        self.embedding = embedding
        self.rel_weights = rel_weights    # [layer][relation] -> Tensor
        self.self_weights = self_weights  # [layer] -> Tensor
        self.att_logits = att_logits      # [layer] -> Tensor of shape 1 x R

    @classmethod
    def init(cls, rng: np.random.Generator, n_relations: int, d_in: int,
             hidden: int, out: int, n_nodes: int | None = None) -> "RgcnParams":
        dims = [(d_in, hidden), (hidden, out)]
        rel_w = [[Tensor(glorot(rng, a, b)) for _ in range(n_relations)]
                 for a, b in dims]
        self_w = [Tensor(glorot(rng, a, b)) for a, b in dims]
        att = [Tensor(np.zeros((1, n_relations))) for _ in dims]
        emb = None
        if n_nodes is not None:
            emb = Tensor(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(n_nodes, d_in)))
        return cls(emb, rel_w, self_w, att)

    def tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.embedding is not None:
            out["embedding"] = self.embedding
        for layer, ws in enumerate(self.rel_weights):
            for r, w in enumerate(ws):
                out[f"rel_w{layer}_{r}"] = w
        for layer, w in enumerate(self.self_weights):
            out[f"self_w{layer}"] = w
        for layer, a in enumerate(self.att_logits):
            out[f"att{layer}"] = a
        return out

    def relation_attention(self) -> list[np.ndarray]:
        """Current per-layer attention distribution over relations."""
        probs = []
        for a in self.att_logits:
            e = np.exp(a.value - a.value.max())
            probs.append((e / e.sum()).reshape(-1))
        return probs


def rgcn_forward(norm: NormalizedGraph, p: RgcnParams,
                 features: np.ndarray | None = None,
                 training: bool = False, dropout_rate: float = 0.1,
                 rng: np.random.Generator | None = None,
                 tape: GradTape | None = None) -> Tensor:
    """H_l = act( sum_r att_r * A_r H_{l-1} W_{l,r} + H_{l-1} W_self_l ).

    ReLU plus dropout between the two layers; the final layer stays linear
    so downstream fusion mixes signed embeddings. The attention scalars are
    folded into the (small) relation weights and all blocks go through one
    wide matmul, which is algebraically identical to the per-relation form.
    """
    n_rel = len(norm.relations)
    if n_rel != len(p.rel_weights[0]):
        raise ShapeError(f"graph has {n_rel} relations, params expect "
                         f"{len(p.rel_weights[0])}")
    h: Tensor | np.ndarray
    if features is not None:
        h = np.asarray(features, dtype=np.float64)
        if h.shape[0] != norm.n:
            raise ShapeError(f"features for {h.shape[0]} nodes, graph has {norm.n}")
    else:
        if p.embedding is None:
            raise ShapeError("params have no embedding table and no features given")
        h = p.embedding

    last = p.n_layers - 1
    for layer in range(p.n_layers):
        att = row_softmax(p.att_logits[layer], tape)
        blocks = [scale(w, slice_cols(att, r, r + 1, tape), tape)
                  for r, w in enumerate(p.rel_weights[layer])]
        blocks.append(p.self_weights[layer])
        w_cat = concat_cols(blocks, tape)
        if isinstance(h, Tensor):
            v = matmul(h, w_cat, tape)
        else:
            v = const_matmul(h, w_cat, tape)
        d_out = p.self_weights[layer].cols
        pieces = split_cols(v, [d_out] * len(blocks), tape)
        acc = pieces[-1]  # self path propagates nothing
        for r, adj in enumerate(norm.relations):
            acc = add(acc, sparse_dense_matmul(adj, pieces[r], tape), tape)
        h = acc
        if layer < last:
            h = relu(h, tape)
            h = dropout(h, dropout_rate, training, rng, tape)
    return h


# ---------------------------------------------------------------------------
# three-layer MLPs (adjacency rows / text features)
# ---------------------------------------------------------------------------


class _MlpParams:
    def __init__(self, weights: list[Tensor], biases: list[Tensor]):
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, hidden: int, out: int):
        dims = [(d_in, hidden), (hidden, hidden), (hidden, out)]
        ws = [Tensor(glorot(rng, a, b)) for a, b in dims]
        bs = [Tensor(np.zeros((1, b))) for _, b in dims]
        return cls(ws, bs)

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out


class AdjMlpParams(_MlpParams):
    """n -> hidden -> hidden -> out over binarized summed-adjacency rows."""


class TextMlpParams(_MlpParams):
    """d_text -> hidden -> hidden -> out over fixed base text embeddings."""


def _mlp_forward(x, p: _MlpParams, training: bool, dropout_rate: float,
                 rng, tape) -> Tensor:
    # First layer input may be a constant matrix (dense or sparse); later
    # layers always carry Tensors. ReLU, ReLU, then linear.
    h: Tensor | None = None
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        if h is None:
            if sp.issparse(x):
                z = sparse_dense_matmul(x, w, tape)
            else:
                z = const_matmul(np.asarray(x, dtype=np.float64), w, tape)
        else:
            z = matmul(h, w, tape)
        z = add_bias(z, b, tape)
        if i < len(p.weights) - 1:
            z = relu(z, tape)
            z = dropout(z, dropout_rate, training, rng, tape)
        h = z
    return h


def adj_mlp_forward(g, p: AdjMlpParams, training: bool = False,
                    dropout_rate: float = 0.1,
                    rng: np.random.Generator | None = None,
                    tape: GradTape | None = None) -> Tensor:
    """Encode each user from its row of the binarized summed adjacency."""
    summed = summed_binary_adjacency(g) if isinstance(g, HeteroGraph) else g
    if summed.shape[1] != p.weights[0].rows:
        raise ShapeError(f"adjacency width {summed.shape[1]} vs first-layer "
                         f"input {p.weights[0].rows}")
    return _mlp_forward(summed, p, training, dropout_rate, rng, tape)


def text_mlp_forward(x: np.ndarray, p: TextMlpParams, training: bool = False,
                     dropout_rate: float = 0.1,
                     rng: np.random.Generator | None = None,
                     tape: GradTape | None = None) -> Tensor:
    """Fine-tune fixed base text embeddings into the fusion dimension."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != p.weights[0].rows:
        raise ShapeError(f"text width {x.shape[1]} vs first-layer input "
                         f"{p.weights[0].rows}")
    return _mlp_forward(x, p, training, dropout_rate, rng, tape)


# ---------------------------------------------------------------------------
# text featurization
# ---------------------------------------------------------------------------


@dataclass
class TextEncoderConfig:
    mode: str                 # "pooled" | "precomputed"
    path: str | None = None   # word-vector file or embedding-matrix file
    dim: int | None = None    # expected width; None accepts whatever the file has

    def __post_init__(self):
        if self.mode not in ("pooled", "precomputed"):
            raise ValueError(f"unknown text encoder mode {self.mode!r}")
        if self.path is None:
            raise ValueError(f"{self.mode} text encoding needs a file path")
        if self.dim is not None and self.dim <= 0:
            raise ValueError("text embedding dim must be positive")


def tokenize(text: str) -> list[str]:
    """Lowercase, drop URLs and @-mentions, split on whitespace."""
    out = []
    for tok in text.lower().split():
        if tok.startswith(("http://", "https://", "www.")):
            continue
        if tok.startswith("@") and len(tok) > 1:
            continue
        out.append(tok)
    return out


def pool_word_vectors(tokens_per_user: list[list[str]], index: dict[str, int],
                      vectors: np.ndarray) -> np.ndarray:
    """Mean of the in-vocabulary token vectors per user; zero row if none."""
    n = len(tokens_per_user)
    dim = vectors.shape[1]
    out = np.zeros((n, dim))
    for u, tokens in enumerate(tokens_per_user):
        rows = [index[t] for t in tokens if t in index]
        if rows:
            out[u] = vectors[rows].mean(axis=0)
    return out


def load_precomputed_embeddings(path, n: int) -> np.ndarray:
    """Read an embedding matrix and require one row per graph node."""
    from .data import read_embedding_matrix

    mat = read_embedding_matrix(path)
    if mat.shape[0] != n:
        raise ValueError(f"embedding matrix has {mat.shape[0]} rows, "
                         f"graph has {n} nodes")
    return mat


def build_text_features(cfg: TextEncoderConfig,
                        tokens_per_user: list[list[str]] | None,
                        n: int) -> np.ndarray:
    """Base per-user text embeddings under either encoder mode."""
    from .data import load_word_vectors

    if cfg.mode == "pooled":
        if tokens_per_user is None:
            raise ValueError("pooled text encoding needs per-user tokens")
        if len(tokens_per_user) != n:
            raise ValueError(f"tokens for {len(tokens_per_user)} users, "
                             f"graph has {n} nodes")
        index, table = load_word_vectors(cfg.path)
        features = pool_word_vectors(tokens_per_user, index, table)
    else:
        features = load_precomputed_embeddings(cfg.path, n)
    if cfg.dim is not None and features.shape[1] != cfg.dim:
        raise ValueError(f"text embeddings are {features.shape[1]}-dim, "
                         f"config expects {cfg.dim}")
    return features
