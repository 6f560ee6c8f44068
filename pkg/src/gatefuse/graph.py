"""Heterogeneous multi-relation graphs: construction, normalization, utilities.

A graph holds one binary n x n CSR adjacency per directed relation type.
Each declared relation also materializes its reverse (the transpose) as a
distinct relation, so m declared types yield 2m matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autodiff import validate_csr


class IngestionError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class RelationKind:
    id: int
    name: str
    direction: str  # "forward" | "reverse"


class HeteroGraph:
    """n nodes and a list of (RelationKind, binary CSR adjacency) pairs."""

    def __init__(self, n: int, relations: list[tuple[RelationKind, sp.csr_matrix]],
                 node_names: list[str] | None = None):
        self.n = n
        self.relations = relations
        self.node_names = node_names
        for kind, adj in relations:
            if adj.shape != (n, n):
                raise IngestionError(
                    f"relation {kind.name}: adjacency is {adj.shape}, want {(n, n)}")

    @property
    def relation_names(self) -> list[str]:
        return [kind.name for kind, _ in self.relations]

    def num_edges(self) -> int:
        return int(sum(adj.nnz for _, adj in self.relations))


@dataclass
class NormalizedGraph:
    """Row-normalized per-relation adjacencies plus the binarized link union."""

    n: int
    kinds: list[RelationKind]
    relations: list[sp.csr_matrix]      # self-loops added, rows sum to 1
    summed_adjacency: sp.csr_matrix     # binarized sum of the raw relations


def build_graph(edges, n: int, relation_names: list[str] | None = None,
                weighted: bool = False,
                node_names: list[str] | None = None) -> HeteroGraph:
    """Build a HeteroGraph from (src, dst, relation-name) triples.

    Duplicate edges collapse to a single binary entry unless ``weighted``,
    in which case the entry carries the multiplicity count. Every declared
    relation gets a reverse twin built from its transpose.
    """
    if relation_names is None:
        seen: dict[str, None] = {}
        for _, _, name in edges:
            seen.setdefault(name, None)
        relation_names = sorted(seen)
    declared = set(relation_names)

    by_rel: dict[str, tuple[list[int], list[int]]] = {
        name: ([], []) for name in relation_names}
    for pos, (src, dst, name) in enumerate(edges):
        if name not in declared:
            raise IngestionError(
                f"edge {pos}: unknown relation {name!r}; declared: "
                f"{sorted(declared)}")
        if not (0 <= src < n) or not (0 <= dst < n):
            raise IngestionError(
                f"edge {pos}: ({src}, {dst}) out of range for n={n}")
        rows, cols = by_rel[name]
        rows.append(src)
        cols.append(dst)

    relations: list[tuple[RelationKind, sp.csr_matrix]] = []
    for i, name in enumerate(relation_names):
        rows, cols = by_rel[name]
        data = np.ones(len(rows), dtype=np.float64)
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        if not weighted:
            adj.data[:] = 1.0
        adj = validate_csr(adj)
        rev = validate_csr(adj.T.tocsr())
        relations.append((RelationKind(2 * i, name, "forward"), adj))
        relations.append((RelationKind(2 * i + 1, f"{name}_rev", "reverse"), rev))
    return HeteroGraph(n, relations, node_names=node_names)


def summed_binary_adjacency(g: HeteroGraph) -> sp.csr_matrix:
    """Binarized union of all relation adjacencies (no self-loops)."""
    total = sp.csr_matrix((g.n, g.n), dtype=np.float64)
    for _, adj in g.relations:
        total = total + adj
    total = total.tocsr()
    if total.nnz:
        total.data[:] = 1.0
    return validate_csr(total)


def normalize(g: HeteroGraph) -> NormalizedGraph:
    """Add self-loops per relation and divide each row by its degree.

    An isolated node keeps only its self-loop, so its row is [.. 1 ..].
    """
    eye = sp.eye(g.n, format="csr", dtype=np.float64)
    normed = []
    kinds = []
    for kind, adj in g.relations:
        with_loops = (adj + eye).tocsr()
        with_loops.data = np.minimum(with_loops.data, 1.0)  # rebinarize diag
        deg = np.asarray(with_loops.sum(axis=1)).reshape(-1)
        inv = sp.diags(1.0 / deg)
        normed.append(validate_csr((inv @ with_loops).tocsr()))
        kinds.append(kind)
    return NormalizedGraph(g.n, kinds, normed, summed_binary_adjacency(g))


def permute_nodes(g: HeteroGraph, perm) -> HeteroGraph:
    """Relabel nodes: node i becomes perm[i]; adjacencies are conjugated."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.n,) or not np.array_equal(np.sort(perm), np.arange(g.n)):
        raise ValueError("perm must be a bijection on [0, n)")
    inv = np.empty(g.n, dtype=np.int64)
    inv[perm] = np.arange(g.n)
    relations = [(kind, validate_csr(adj[inv][:, inv].tocsr()))
                 for kind, adj in g.relations]
    names = None
    if g.node_names is not None:
        names = [""] * g.n
        for old, name in enumerate(g.node_names):
            names[perm[old]] = name
    return HeteroGraph(g.n, relations, node_names=names)
