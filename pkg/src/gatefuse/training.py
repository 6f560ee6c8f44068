"""Dataset splitting, the joint training loop for every fusion mode, metric
computation, and multi-seed grid orchestration.

All training is full batch: one gradient step per epoch on the train-masked
cross entropy, validation-accuracy early stopping with best-epoch restore.
A single seeded generator drives parameter init and dropout, so identical
(config, seed, data) reproduces the parameter trajectory bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradTape, Tensor, cross_entropy
from .encoders import (
    AdjMlpParams,
    RgcnParams,
    TextMlpParams,
    adj_mlp_forward,
    rgcn_forward,
    text_mlp_forward,
)
from .fusion import (
    MODES,
    ClassifierParams,
    FusionConfig,
    GateOutput,
    GateParams,
    fuse_and_classify,
    gate_forward,
    simple_fusion_forward,
)
from .data import UNLABELED
from .graph import HeteroGraph, NormalizedGraph, normalize
from .optim import Adam


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class LabeledSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    labels: np.ndarray  # full n-vector, UNLABELED sentinel where unknown


@dataclass
class TrainConfig:
    lr: float = 0.01
    hidden: int = 100
    dropout: float = 0.1
    epochs: int = 300
    patience: int = 50
    seed: int = 0
    mode: str = "camue"
    lambda_: float = 0.1
    graph_encoder: str = "rgcn"  # "rgcn" | "mlp"
    gate_hidden: tuple[int, int] = (64, 32)

    def __post_init__(self):
        if self.lr <= 0 or self.hidden <= 0 or self.patience <= 0:
            raise ValueError("lr, hidden and patience must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lambda_}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.graph_encoder not in ("rgcn", "mlp"):
            raise ValueError(f"unknown graph encoder {self.graph_encoder!r}")
        if self.mode == "simple" and self.graph_encoder != "rgcn":
            raise ValueError("simple fusion requires the rgcn graph encoder")


@dataclass
class RunMetrics:
    seed: int
    accuracy: float
    f1: float
    f1_binary: float = float("nan")
    epochs_ran: int = 0


@dataclass
class EvalReport:
    """Metrics for one or many seeded runs, with mean/std/max aggregates."""

    runs: list[RunMetrics]
    accuracy: float = field(init=False)
    f1: float = field(init=False)
    accuracy_std: float = field(init=False)
    f1_std: float = field(init=False)
    accuracy_max: float = field(init=False)

    def __post_init__(self):
        acc = np.array([r.accuracy for r in self.runs])
        f1 = np.array([r.f1 for r in self.runs])
        self.accuracy = float(acc.mean())
        self.f1 = float(f1.mean())
        self.accuracy_std = float(acc.std())
        self.f1_std = float(f1.std())
        self.accuracy_max = float(acc.max())

    def __str__(self) -> str:  # the table cell format: "accuracy ; f1"
        return f"{self.accuracy:.3f} ; {self.f1:.3f}"


def make_split(labels: np.ndarray, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> LabeledSplit:
    """Stratified shuffle of the labeled nodes into train/val/test.

    Per class: round(ratio * count) for train and val, remainder to test,
    so each partition's class mix stays within one node of the global ratio.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for c in np.unique(labels[labels != UNLABELED]):
        ids = np.flatnonzero(labels == c)
        if ids.size < 3:
            raise ValueError(f"class {c} has only {ids.size} labeled nodes; "
                             "need at least 3")
        ids = rng.permutation(ids)
        n_train = int(round(ratios[0] * ids.size))
        n_val = int(round(ratios[1] * ids.size))
        n_val = min(n_val, ids.size - n_train)
        train.append(ids[:n_train])
        val.append(ids[n_train:n_train + n_val])
        test.append(ids[n_train + n_val:])
    return LabeledSplit(
        train=np.sort(np.concatenate(train)),
        val=np.sort(np.concatenate(val)),
        test=np.sort(np.concatenate(test)),
        labels=labels,
    )


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def accuracy_and_f1(pred: np.ndarray, true: np.ndarray,
                    n_classes: int) -> tuple[float, float, float]:
    """Accuracy, macro-F1 over all classes, and binary F1 of class 1
    (NaN when more than two classes)."""
    if pred.size == 0:
        raise ValueError("empty evaluation set")
    acc = float(np.mean(pred == true))
    f1s = []
    for c in range(n_classes):
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = np.sum((pred != c) & (true == c))
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    macro = float(np.mean(f1s))
    binary = float(f1s[1]) if n_classes == 2 else float("nan")
    return acc, macro, binary


# ---------------------------------------------------------------------------
# model assembly
# ---------------------------------------------------------------------------


@dataclass
class ModelInputs:
    norm: NormalizedGraph
    text: np.ndarray | None

    @property
    def summed(self):
        return self.norm.summed_adjacency


def prepare_inputs(graph: HeteroGraph, text_features: np.ndarray | None) -> ModelInputs:
    return ModelInputs(normalize(graph), text_features)


class Model:
    """Parameter groups for one fusion mode plus the mode's forward pass."""

    def __init__(self, cfg: TrainConfig, n: int, d_text: int | None,
                 n_classes: int, n_relations: int, rng: np.random.Generator):
        self.mode = cfg.mode
        self.graph_encoder = cfg.graph_encoder
        self.fusion = FusionConfig(lambda_=cfg.lambda_, mode=cfg.mode)
        self.dropout = cfg.dropout
        self.n = n
        self.d_text = d_text
        self.n_classes = n_classes
        self.n_relations = n_relations
        self.hidden = cfg.hidden
        self.gate_hidden = tuple(cfg.gate_hidden)

        h = cfg.hidden
        self.rgcn: RgcnParams | None = None
        self.adj_mlp: AdjMlpParams | None = None
        self.text_mlp: TextMlpParams | None = None
        self.gate: GateParams | None = None

        uses_graph = self.mode in ("camue", "fixed", "link", "simple")
        uses_text_mlp = self.mode in ("camue", "fixed", "text")
        if self.mode == "simple":
            self.rgcn = RgcnParams.init(rng, n_relations, d_in=d_text,
                                        hidden=h, out=h)
        elif uses_graph:
            if self.graph_encoder == "rgcn":
                self.rgcn = RgcnParams.init(rng, n_relations, d_in=h,
                                            hidden=h, out=h, n_nodes=n)
            else:
                self.adj_mlp = AdjMlpParams.init(rng, d_in=n, hidden=h, out=h)
        if uses_text_mlp:
            self.text_mlp = TextMlpParams.init(rng, d_in=d_text, hidden=h, out=h)
        if self.mode in ("camue", "fixed"):
            # fixed mode creates the gate but never evaluates it, so its
            # parameters provably receive zero gradient.
            self.gate = GateParams.init(rng, n, d_text, *self.gate_hidden)
        self.classifier = ClassifierParams.init(rng, h, n_classes)

    def parameters(self) -> dict[str, Tensor]:
        groups: list[tuple[str, dict[str, Tensor]]] = []
        if self.rgcn is not None:
            groups.append(("rgcn", self.rgcn.tensors()))
        if self.adj_mlp is not None:
            groups.append(("adj_mlp", self.adj_mlp.tensors()))
        if self.text_mlp is not None:
            groups.append(("text_mlp", self.text_mlp.tensors()))
        if self.gate is not None:
            groups.append(("gate", self.gate.tensors()))
        groups.append(("classifier", self.classifier.tensors()))
        return {f"{g}.{k}": t for g, tensors in groups for k, t in tensors.items()}

    def forward(self, inputs: ModelInputs, training: bool = False,
                rng: np.random.Generator | None = None,
                tape: GradTape | None = None) -> tuple[Tensor, GateOutput | None]:
        kw = dict(training=training, dropout_rate=self.dropout, rng=rng, tape=tape)
        if self.mode == "simple":
            return simple_fusion_forward(inputs.norm, inputs.text, self.rgcn,
                                         self.classifier, **kw), None
        g_emb = None
        if self.rgcn is not None:
            g_emb = rgcn_forward(inputs.norm, self.rgcn, **kw)
        elif self.adj_mlp is not None:
            g_emb = adj_mlp_forward(inputs.summed, self.adj_mlp, **kw)
        t_emb = None
        if self.text_mlp is not None:
            t_emb = text_mlp_forward(inputs.text, self.text_mlp, **kw)
        gate = None
        if self.mode == "camue":
            gate = gate_forward(inputs.summed, inputs.text, self.gate, **kw)
        logits = fuse_and_classify(g_emb, t_emb, gate, self.fusion,
                                   self.classifier, tape)
        return logits, gate

    def predict(self, inputs: ModelInputs) -> np.ndarray:
        logits, _ = self.forward(inputs, training=False)
        return logits.value.argmax(axis=1)

    def gate_output(self, inputs: ModelInputs) -> GateOutput | None:
        _, gate = self.forward(inputs, training=False)
        return gate

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.parameters().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, t in self.parameters().items():
            t.value[...] = snap[k]


def build_model(cfg: TrainConfig, n: int, d_text: int | None, n_classes: int,
                n_relations: int, rng: np.random.Generator) -> Model:
    return Model(cfg, n, d_text, n_classes, n_relations, rng)


# ---------------------------------------------------------------------------
# training and evaluation
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    model: Model
    gate: GateOutput | None
    report: EvalReport  # validation metrics of the restored best epoch
    losses: list[float]
    best_epoch: int
    epochs_ran: int


def _masked_accuracy(model: Model, inputs: ModelInputs, ids: np.ndarray,
                     labels: np.ndarray) -> float:
    pred = model.predict(inputs)
    return float(np.mean(pred[ids] == labels[ids]))


def train(graph: HeteroGraph, text_features: np.ndarray | None,
          split: LabeledSplit, cfg: TrainConfig,
          inputs: ModelInputs | None = None) -> TrainResult:
    """Full-batch joint training with early stopping on validation accuracy."""
    if split.train.size == 0:
        raise ValueError("empty train set")
    if split.val.size == 0:
        raise ValueError("empty validation set")
    if inputs is None:
        inputs = prepare_inputs(graph, text_features)
    labeled = split.labels[split.labels != UNLABELED]
    n_classes = int(labeled.max()) + 1
    d_text = None if text_features is None else int(np.asarray(text_features).shape[1])
    rng = np.random.default_rng(cfg.seed)
    model = build_model(cfg, graph.n, d_text, n_classes,
                        len(inputs.norm.relations), rng)
    opt = Adam(model.parameters(), lr=cfg.lr)

    best = model.snapshot()
    best_acc = _masked_accuracy(model, inputs, split.val, split.labels)
    best_epoch = 0
    since_best = 0
    losses: list[float] = []
    epochs_ran = 0
    for epoch in range(1, cfg.epochs + 1):
        tape = GradTape()
        try:
            logits, _ = model.forward(inputs, training=True, rng=rng, tape=tape)
            loss = cross_entropy(logits, split.labels, split.train, tape)
        except ArithmeticError as exc:
            raise TrainingDiverged(
                f"non-finite forward pass at epoch {epoch} (lr={cfg.lr}): {exc}")
        loss_val = loss.item()
        if not np.isfinite(loss_val):
            raise TrainingDiverged(f"loss is not finite at epoch {epoch} "
                                   f"(lr={cfg.lr})")
        losses.append(loss_val)
        opt.zero_grad()
        tape.backward(loss)
        opt.step()
        epochs_ran = epoch

        val_acc = _masked_accuracy(model, inputs, split.val, split.labels)
        if val_acc >= best_acc:
            # ties refresh the snapshot (keep the most-trained epoch at the
            # best accuracy) but only strict improvements reset patience
            if val_acc > best_acc:
                since_best = 0
            else:
                since_best += 1
            best_acc = val_acc
            best = model.snapshot()
            best_epoch = epoch
        else:
            since_best += 1
        if since_best >= cfg.patience:
            break
    model.restore(best)

    pred = model.predict(inputs)
    acc, f1, f1b = accuracy_and_f1(pred[split.val], split.labels[split.val],
                                   n_classes)
    report = EvalReport([RunMetrics(cfg.seed, acc, f1, f1b, epochs_ran)])
    gate = model.gate_output(inputs) if model.mode == "camue" else None
    return TrainResult(model, gate, report, losses, best_epoch, epochs_ran)


def evaluate(model: Model, inputs: ModelInputs, split: LabeledSplit,
             subset: str = "test", seed: int = 0) -> EvalReport:
    """Accuracy and macro-F1 of the model on one split partition."""
    ids = getattr(split, subset)
    if ids.size == 0:
        raise ValueError(f"empty {subset} set")
    pred = model.predict(inputs)
    acc, f1, f1b = accuracy_and_f1(pred[ids], split.labels[ids], model.n_classes)
    return EvalReport([RunMetrics(seed, acc, f1, f1b)])


# ---------------------------------------------------------------------------
# the mode x seed grid
# ---------------------------------------------------------------------------


@dataclass
class GridRecord:
    mode: str
    seed: int
    lambda_: float
    accuracy: float
    f1: float
    f1_binary: float
    epochs_ran: int


def run_grid(graph: HeteroGraph, text_features: np.ndarray | None,
             labels: np.ndarray, modes, seeds,
             cfg: TrainConfig | None = None) -> tuple[list[GridRecord], dict[str, EvalReport]]:
    """Train and test every mode x seed cell; aggregate per mode.

    The split is derived from each run's seed, so all modes see identical
    partitions at a given seed and comparisons are paired.
    """
    if cfg is None:
        cfg = TrainConfig()
    inputs = prepare_inputs(graph, text_features)
    records: list[GridRecord] = []
    per_mode: dict[str, list[RunMetrics]] = {m: [] for m in modes}
    for seed in seeds:
        split = make_split(labels, seed=seed)
        for mode in modes:
            run_cfg = TrainConfig(lr=cfg.lr, hidden=cfg.hidden,
                                  dropout=cfg.dropout, epochs=cfg.epochs,
                                  patience=cfg.patience, seed=seed, mode=mode,
                                  lambda_=cfg.lambda_,
                                  graph_encoder=cfg.graph_encoder,
                                  gate_hidden=cfg.gate_hidden)
            try:
                result = train(graph, text_features, split, run_cfg, inputs=inputs)
            except Exception as exc:
                raise RuntimeError(f"grid run failed (mode={mode}, seed={seed}): "
                                   f"{exc}") from exc
            test = evaluate(result.model, inputs, split, "test", seed=seed)
            m = test.runs[0]
            m.epochs_ran = result.epochs_ran
            records.append(GridRecord(mode, seed, run_cfg.lambda_, m.accuracy,
                                      m.f1, m.f1_binary, result.epochs_ran))
            per_mode[mode].append(m)
    reports = {m: EvalReport(runs) for m, runs in per_mode.items()}
    return records, reports


def sweep_lambda(graph, text_features, labels, cfg: TrainConfig,
                 candidates=(0.0, 0.05, 0.1, 0.2)) -> float:
    """Pick the floor weight with the best validation accuracy."""
    split = make_split(labels, seed=cfg.seed)
    best_lam, best_acc = candidates[0], -1.0
    for lam in candidates:
        trial = TrainConfig(lr=cfg.lr, hidden=cfg.hidden, dropout=cfg.dropout,
                            epochs=cfg.epochs, patience=cfg.patience,
                            seed=cfg.seed, mode=cfg.mode, lambda_=lam,
                            graph_encoder=cfg.graph_encoder,
                            gate_hidden=cfg.gate_hidden)
        acc = train(graph, text_features, split, trial).report.accuracy
        if acc > best_acc:
            best_lam, best_acc = lam, acc
    return best_lam


def grid_tsv(records: list[GridRecord]) -> str:
    lines = ["mode\tseed\tlambda\taccuracy\tf1\tf1_binary\tepochs_ran"]
    for r in records:
        lines.append(f"{r.mode}\t{r.seed}\t{r.lambda_!r}\t{r.accuracy!r}\t"
                     f"{r.f1!r}\t{r.f1_binary!r}\t{r.epochs_ran}")
    return "\n".join(lines) + "\n"


def grid_json(records: list[GridRecord]) -> str:
    objs = [{"mode": r.mode, "seed": r.seed, "lambda": r.lambda_,
             "accuracy": r.accuracy, "f1": r.f1, "f1_binary": r.f1_binary,
             "epochs_ran": r.epochs_ran} for r in records]
    return json.dumps(objs, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"GATEFUSE-CKPT-1\n"


def save_checkpoint(path, model: Model, extra: dict | None = None) -> None:
    """Binary checkpoint: a JSON header plus raw float64 parameter buffers.

    Byte-for-byte deterministic for identical parameters and metadata.
    """
    meta = {
        "mode": model.mode,
        "graph_encoder": model.graph_encoder,
        "n": model.n,
        "d_text": model.d_text,
        "n_classes": model.n_classes,
        "n_relations": model.n_relations,
        "hidden": model.hidden,
        "gate_hidden": list(model.gate_hidden),
        "dropout": model.dropout,
        "lambda": model.fusion.lambda_,
    }
    if extra:
        meta.update(extra)
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(json.dumps(meta, sort_keys=True).encode() + b"\n")
        fh.write(f"{len(params)}\n".encode())
        for name, t in params.items():
            fh.write(f"param {name} {t.rows} {t.cols}\n".encode())
            fh.write(np.ascontiguousarray(t.value, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Model, dict]:
    with open(path, "rb") as fh:
        if fh.readline() != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        meta = json.loads(fh.readline().decode())
        n_params = int(fh.readline())
        cfg = TrainConfig(hidden=meta["hidden"], dropout=meta["dropout"],
                          mode=meta["mode"], lambda_=meta["lambda"],
                          graph_encoder=meta["graph_encoder"],
                          gate_hidden=tuple(meta["gate_hidden"]),
                          seed=meta.get("seed", 0))
        model = Model(cfg, meta["n"], meta["d_text"], meta["n_classes"],
                      meta["n_relations"], np.random.default_rng(0))
        params = model.parameters()
        if len(params) != n_params:
            raise ValueError(f"{path}: expected {len(params)} parameters, "
                             f"file has {n_params}")
        for _ in range(n_params):
            header = fh.readline().decode().split()
            if len(header) != 4 or header[0] != "param":
                raise ValueError(f"{path}: corrupt parameter header")
            name, rows, cols = header[1], int(header[2]), int(header[3])
            if name not in params:
                raise ValueError(f"{path}: unexpected parameter {name}")
            t = params[name]
            if t.shape != (rows, cols):
                raise ValueError(f"{path}: {name} is {rows}x{cols}, "
                                 f"model wants {t.shape}")
            buf = fh.read(rows * cols * 8)
            t.value[...] = np.frombuffer(buf, dtype="<f8").reshape(rows, cols)
    return model, meta
