"""Flat-file ingestion: edge/label/text TSVs, embedding matrices, word vectors.

All formats are line oriented and diff friendly:

  edges.tsv       src<TAB>dst<TAB>relation
  labels.tsv      node_id<TAB>class_name
  texts.tsv       node_id<TAB>utf8 text   (repeats per user concatenate)
  embeddings      header "n D", then n rows of D floats (17 significant digits)
  word vectors    token v1 ... vD, space separated
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import tokenize
from .graph import HeteroGraph, IngestionError, build_graph

UNLABELED = -1


@dataclass
class DatasetBundle:
    graph: HeteroGraph
    texts: list[list[str]] | None       # tokens per user, or None
    features: np.ndarray | None         # precomputed n x D matrix, or None
    labels: np.ndarray                  # n-vector, UNLABELED where unknown
    class_names: list[str]
    relation_names: list[str]
    task: str = "node-classification"

    def __post_init__(self):
        n = self.graph.n
        if self.labels.shape != (n,):
            raise IngestionError(f"labels cover {self.labels.shape[0]} nodes, "
                                 f"graph has {n}")
        if self.texts is not None and len(self.texts) != n:
            raise IngestionError(f"texts cover {len(self.texts)} nodes, "
                                 f"graph has {n}")
        if self.features is not None and self.features.shape[0] != n:
            raise IngestionError(f"features cover {self.features.shape[0]} "
                                 f"nodes, graph has {n}")
        labeled = self.labels[self.labels != UNLABELED]
        if labeled.size and np.unique(labeled).size < 2:
            raise IngestionError("need at least 2 classes among labeled nodes")


# ---------------------------------------------------------------------------
# TSV loaders / writers
# ---------------------------------------------------------------------------


def load_edges(path, n: int, relations: list[str] | None = None,
               weighted: bool = False) -> HeteroGraph:
    """Parse src<TAB>dst<TAB>relation lines into a HeteroGraph.

    ``weighted`` keeps repeated edges as multiplicity counts instead of
    collapsing them to binary entries.
    """
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestionError(f"{path}:{lineno}: want src<TAB>dst<TAB>"
                                     f"relation, got {line!r}")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-integer node id "
                                     f"in {line!r}") from None
            if not (0 <= src < n) or not (0 <= dst < n):
                raise IngestionError(f"{path}:{lineno}: node id out of range "
                                     f"for n={n}: {line!r}")
            if relations is not None and parts[2] not in relations:
                raise IngestionError(f"{path}:{lineno}: unknown relation "
                                     f"{parts[2]!r}; declared: {relations}")
            edges.append((src, dst, parts[2]))
    return build_graph(edges, n, relation_names=relations, weighted=weighted)


def write_edges(path, graph: HeteroGraph) -> None:
    """Write forward relations only; reverses are reconstructed on load."""
    with open(path, "w", encoding="utf-8") as fh:
        for kind, adj in graph.relations:
            if kind.direction != "forward":
                continue
            coo = adj.tocoo()
            for src, dst in zip(coo.row, coo.col):
                fh.write(f"{src}\t{dst}\t{kind.name}\n")


def load_labels(path, n: int, classes: list[str] | None = None
                ) -> tuple[np.ndarray, list[str]]:
    """Parse node_id<TAB>class_name lines; absent nodes stay unlabeled."""
    raw: dict[int, str] = {}
    seen: dict[str, None] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise IngestionError(f"{path}:{lineno}: want node_id<TAB>"
                                     f"class, got {line!r}")
            try:
                node = int(parts[0])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-integer node id") from None
            if not 0 <= node < n:
                raise IngestionError(f"{path}:{lineno}: node id {node} out of "
                                     f"range for n={n}")
            name = parts[1]
            if classes is not None and name not in classes:
                raise IngestionError(f"{path}:{lineno}: unknown class {name!r}; "
                                     f"declared: {classes}")
            if node in raw and raw[node] != name:
                raise IngestionError(f"{path}:{lineno}: node {node} labeled "
                                     f"both {raw[node]!r} and {name!r}")
            raw[node] = name
            seen.setdefault(name, None)
    class_names = classes if classes is not None else sorted(seen)
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.full(n, UNLABELED, dtype=np.int64)
    for node, name in raw.items():
        labels[node] = index[name]
    return labels, list(class_names)


def write_labels(path, labels: np.ndarray, class_names: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node, c in enumerate(labels):
            if c != UNLABELED:
                fh.write(f"{node}\t{class_names[c]}\n")


def load_texts(path, n: int) -> list[list[str]]:
    """Parse node_id<TAB>text lines into tokens per user.

    Repeated lines for one user concatenate in file order; users missing
    from the file get an empty token list.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        content = blob.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path}: invalid utf-8 at byte offset "
                             f"{exc.start}") from None
    texts: list[list[str]] = [[] for _ in range(n)]
    for lineno, line in enumerate(content.split("\n"), start=1):
        if not line:
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise IngestionError(f"{path}:{lineno}: want node_id<TAB>text, "
                                 f"got {line!r}")
        try:
            node = int(parts[0])
        except ValueError:
            raise IngestionError(f"{path}:{lineno}: non-integer node id") from None
        if not 0 <= node < n:
            raise IngestionError(f"{path}:{lineno}: node id {node} out of "
                                 f"range for n={n}")
        texts[node].extend(tokenize(parts[1]))
    return texts


def write_texts(path, texts_per_user: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node, text in enumerate(texts_per_user):
            if text:
                fh.write(f"{node}\t{text}\n")


# ---------------------------------------------------------------------------
# embedding matrices and word vectors
# ---------------------------------------------------------------------------


def write_embedding_matrix(path, matrix: np.ndarray) -> None:
    """Header "n D", then rows of floats at 17 significant digits so the
    round trip is bit exact."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for row in matrix:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_embedding_matrix(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise IngestionError(f"{path}: want header 'n D'")
        n, d = int(header[0]), int(header[1])
        out = np.empty((n, d))
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != d:
                raise IngestionError(f"{path}: row {i} has {len(parts)} "
                                     f"values, header says {d}")
            out[i] = [float(x) for x in parts]
        if fh.readline().strip():
            raise IngestionError(f"{path}: more rows than header n={n}")
    return out


def load_word_vectors(path) -> tuple[dict[str, int], np.ndarray]:
    """Read "token v1 ... vD" lines; returns (token index, vector matrix)."""
    index: dict[str, int] = {}
    rows: list[np.ndarray] = []
    dim = None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read word vectors: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise IngestionError(f"{path}:{lineno}: vector has "
                                     f"{len(values)} dims, expected {dim}")
            if token in index:
                continue  # keep first occurrence
            index[token] = len(rows)
            rows.append(np.array([float(v) for v in values]))
    if not rows:
        raise IngestionError(f"{path}: no word vectors found")
    return index, np.vstack(rows)


def write_word_vectors(path, index: dict[str, int], vectors: np.ndarray) -> None:
    order = sorted(index, key=index.get)
    with open(path, "w", encoding="utf-8") as fh:
        for token in order:
            row = vectors[index[token]]
            fh.write(token + " " + " ".join(f"{x:.17g}" for x in row) + "\n")


# ---------------------------------------------------------------------------
# bundle-level helpers
# ---------------------------------------------------------------------------


def infer_n(*paths) -> int:
    """Largest node id across the given TSV files, plus one.

    The first column always counts; on three-column lines (edge files) the
    second column counts too.
    """
    top = -1
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                candidates = parts[:2] if len(parts) == 3 else parts[:1]
                for field in candidates:
                    try:
                        top = max(top, int(field))
                    except ValueError:
                        break
    if top < 0:
        raise IngestionError("could not infer node count from inputs")
    return top + 1


def uniform_subsample(labels: np.ndarray, n_labeled: int, n_unlabeled: int,
                      seed: int = 0) -> np.ndarray:
    """Uniformly sampled node ids: n_labeled labeled plus n_unlabeled others."""
    rng = np.random.default_rng(seed)
    lab = np.flatnonzero(labels != UNLABELED)
    unlab = np.flatnonzero(labels == UNLABELED)
    if n_labeled > lab.size or n_unlabeled > unlab.size:
        raise ValueError(f"asked for {n_labeled}+{n_unlabeled} nodes, have "
                         f"{lab.size} labeled and {unlab.size} unlabeled")
    keep = np.concatenate([rng.choice(lab, n_labeled, replace=False),
                           rng.choice(unlab, n_unlabeled, replace=False)])
    return np.sort(keep)


def take_nodes(bundle: DatasetBundle, keep: np.ndarray) -> DatasetBundle:
    """Re-index a bundle onto the ``keep`` subset of nodes."""
    keep = np.asarray(keep, dtype=np.int64)
    relations = [(kind, adj[keep][:, keep].tocsr())
                 for kind, adj in bundle.graph.relations]
    names = bundle.graph.node_names
    graph = HeteroGraph(keep.size, relations,
                        node_names=None if names is None
                        else [names[i] for i in keep])
    return DatasetBundle(
        graph=graph,
        texts=None if bundle.texts is None else [bundle.texts[i] for i in keep],
        features=None if bundle.features is None else bundle.features[keep],
        labels=bundle.labels[keep],
        class_names=bundle.class_names,
        relation_names=bundle.relation_names,
        task=bundle.task,
    )
