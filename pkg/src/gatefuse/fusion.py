"""The per-user attention gate, the regularized fused classifier, and the
simple-fusion baseline.

The gate maps each user's summed-adjacency row and base text embedding to a
pair of weights (alpha for the graph branch, beta for the text branch) via a
two-hidden-layer network and a per-user softmax over the two logits, so
alpha + beta = 1 for every user. The fused representation is
``(alpha + lam) * g + (beta + lam) * t``; the additive floor ``lam`` keeps
both branches trainable even when the gate saturates.
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
    add_const,
    const_matmul,
    dropout,
    matmul,
    relu,
    row_softmax,
    scale_const,
    scale_rows,
    slice_cols,
    sparse_dense_matmul,
)
from .encoders import RgcnParams, glorot, rgcn_forward
from .graph import NormalizedGraph

MODES = ("camue", "fixed", "simple", "link", "text")


@dataclass
class FusionConfig:
    lambda_: float = 0.1
    mode: str = "camue"

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lambda_}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")


class GateParams:
    """First gate layer is split into a graph part (multiplies the sparse
    summed-adjacency row) and a text part; together they equal one weight
    over the concatenated input. The final layer emits exactly two logits."""

    def __init__(self, w1_graph: Tensor, w1_text: Tensor, w2: Tensor, w3: Tensor):
        if w3.cols != 2:
            raise ShapeError("gate output layer must have width 2")
        self.w1_graph = w1_graph
        self.w1_text = w1_text
        self.w2 = w2
        self.w3 = w3

    @classmethod
    def init(cls, rng: np.random.Generator, n_nodes: int, d_text: int,
             h1: int = 64, h2: int = 32) -> "GateParams":
        # w3 starts at zero: the untrained gate is exactly (0.5, 0.5).
        return cls(
            Tensor(glorot(rng, n_nodes, h1)),
            Tensor(glorot(rng, d_text, h1)),
            Tensor(glorot(rng, h1, h2)),
            Tensor(np.zeros((h2, 2))),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {"w1_graph": self.w1_graph, "w1_text": self.w1_text,
                "w2": self.w2, "w3": self.w3}


class GateOutput:
    """Per-user (alpha, beta) weights; carries the differentiable n x 2 tensor."""

    def __init__(self, weights: Tensor):
        if weights.cols != 2:
            raise ShapeError("gate output must have two columns")
        self.weights = weights

    @classmethod
    def constant(cls, n: int, alpha: float = 0.5) -> "GateOutput":
        w = np.empty((n, 2))
        w[:, 0] = alpha
        w[:, 1] = 1.0 - alpha
        return cls(Tensor(w))

    @property
    def n(self) -> int:
        return self.weights.rows

    @property
    def alpha(self) -> np.ndarray:
        return self.weights.value[:, 0]

    @property
    def beta(self) -> np.ndarray:
        return self.weights.value[:, 1]


@dataclass
class ClassifierParams:
    w_out: Tensor
    bias: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_fuse: int, n_classes: int):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        return cls(Tensor(glorot(rng, d_fuse, n_classes)),
                   Tensor(np.zeros((1, n_classes))))

    def tensors(self) -> dict[str, Tensor]:
        return {"w_out": self.w_out, "bias": self.bias}


def gate_forward(summed_adjacency: sp.csr_matrix, text_features: np.ndarray,
                 p: GateParams, training: bool = False,
                 dropout_rate: float = 0.1,
                 rng: np.random.Generator | None = None,
                 tape: GradTape | None = None) -> GateOutput:
    """Compute per-user (alpha, beta) from link structure plus text embedding.

    The concatenated-input product is evaluated as a split sum
    (sparse adjacency part + dense text part), which is algebraically the
    same without densifying an n x n block.
    """
    text_features = np.asarray(text_features, dtype=np.float64)
    n = summed_adjacency.shape[0]
    if text_features.shape[0] != n:
        raise ShapeError(f"text features for {text_features.shape[0]} users, "
                         f"graph has {n}")
    g_part = sparse_dense_matmul(summed_adjacency, p.w1_graph, tape)
    t_part = const_matmul(text_features, p.w1_text, tape)
    h1 = relu(add(g_part, t_part, tape), tape)
    h1 = dropout(h1, dropout_rate, training, rng, tape)
    h2 = relu(matmul(h1, p.w2, tape), tape)
    h2 = dropout(h2, dropout_rate, training, rng, tape)
    logits = matmul(h2, p.w3, tape)
    return GateOutput(row_softmax(logits, tape))


def classify(z: Tensor, cls: ClassifierParams, tape: GradTape | None = None) -> Tensor:
    return add_bias(matmul(z, cls.w_out, tape), cls.bias, tape)


def fuse_and_classify(g_emb: Tensor | None, t_emb: Tensor | None,
                      gate: GateOutput | None, cfg: FusionConfig,
                      cls: ClassifierParams,
                      tape: GradTape | None = None) -> Tensor:
    """z_u = (alpha_u + lam) g_u + (beta_u + lam) t_u, then the linear head.

    Single-branch modes use weight 1 on their branch and lam = 0; the
    fixed-params ablation uses constants alpha = beta = 0.5 and never reads
    the gate.
    """
    mode = cfg.mode
    if mode == "link":
        return classify(g_emb, cls, tape)
    if mode == "text":
        return classify(t_emb, cls, tape)
    if g_emb is None or t_emb is None:
        raise ShapeError(f"mode {mode!r} needs both embeddings")
    if g_emb.shape != t_emb.shape:
        raise ShapeError(f"embedding shapes differ: {g_emb.shape} vs {t_emb.shape}")
    if mode == "fixed":
        z = add(scale_const(g_emb, 0.5 + cfg.lambda_, tape),
                scale_const(t_emb, 0.5 + cfg.lambda_, tape), tape)
        return classify(z, cls, tape)
    if mode != "camue":
        raise ValueError(f"mode {mode!r} has no gated fusion path")
    if gate is None:
        raise ValueError("gated fusion needs a GateOutput")
    if gate.n != g_emb.rows:
        raise ShapeError(f"gate for {gate.n} users, embeddings for {g_emb.rows}")
    w_g = add_const(slice_cols(gate.weights, 0, 1, tape), cfg.lambda_, tape)
    w_t = add_const(slice_cols(gate.weights, 1, 2, tape), cfg.lambda_, tape)
    z = add(scale_rows(g_emb, w_g, tape), scale_rows(t_emb, w_t, tape), tape)
    return classify(z, cls, tape)


def simple_fusion_forward(norm: NormalizedGraph, text_features: np.ndarray,
                          rgcn: RgcnParams, cls: ClassifierParams,
                          training: bool = False, dropout_rate: float = 0.1,
                          rng: np.random.Generator | None = None,
                          tape: GradTape | None = None) -> Tensor:
    """Baseline that injects text features as layer-0 graph-conv input,
    entangling the modalities end to end."""
    emb = rgcn_forward(norm, rgcn, features=text_features, training=training,
                       dropout_rate=dropout_rate, rng=rng, tape=tape)
    return classify(emb, cls, tape)


def contribution_of(gate: GateOutput, user: int) -> tuple[float, float]:
    """The (alpha, beta) pair for one user; alpha > beta means the graph
    branch dominates that user's prediction."""
    if not 0 <= user < gate.n:
        raise IndexError(f"user {user} out of range [0, {gate.n})")
    return float(gate.alpha[user]), float(gate.beta[user])
