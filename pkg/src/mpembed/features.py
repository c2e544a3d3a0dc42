"""Node and edge feature vectors built from a trained embedding table."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedder import EmbeddingTable, emb_nodetype
from .kg import KnowledgeGraph
from .metapath import serialize
from .miner import MetaPathDictionary

OPERATORS = ("average", "concat", "hadamard", "weighted-l1", "weighted-l2")
MULTIPLICATIVE = ("hadamard",)


@dataclass
class FeatureVector:
    vector: np.ndarray
    kind: str
    empty: bool = False

    def __len__(self) -> int:
        return len(self.vector)


def _mean_embedding(counts: dict, table: EmbeddingTable, kind: str, top_k: int | None) -> FeatureVector:
    if not counts:
        return FeatureVector(np.zeros(table.dim), kind, empty=True)
    mps = sorted(counts)
    if top_k is not None:
        # most frequent first, ties broken by meta-path order
        mps = sorted(mps, key=lambda mp: -counts[mp])[:top_k]
    total = np.zeros(table.dim)
    for mp in mps:
        total += table.word_vector(serialize(mp), allow_oov=True)
    return FeatureVector(total / len(mps), kind)


def edge_embedding(
    i: int, j: int, d: MetaPathDictionary, table: EmbeddingTable, top_k: int | None = None
) -> FeatureVector:
    """Mean embedding of the meta-paths joining ``i`` and ``j``.

    Meta-paths outside the vocabulary use their bucket grams. ``top_k`` keeps
    only the most frequently discovered meta-paths. The pair is read in
    canonical (smaller id first) orientation, so the result is symmetric.
    """
    return _mean_embedding(d.counts(min(i, j), max(i, j)), table, "edge-mp", top_k)


def node_embedding_mp(
    i: int, d: MetaPathDictionary, table: EmbeddingTable, top_k: int | None = None
) -> FeatureVector:
    """Mean embedding of every meta-path with ``i`` as an endpoint."""
    return _mean_embedding(d.node_counts(i), table, "node-mp", top_k)


def node_embedding_types(i: int, g: KnowledgeGraph, table: EmbeddingTable) -> FeatureVector:
    """Mean of the unigram vectors of the node's types."""
    types = sorted(g.node_types[i])
    vec = np.mean([emb_nodetype(t, table) for t in types], axis=0)
    return FeatureVector(vec, "node-type")


def combine_pair(a, b, op: str) -> FeatureVector:
    """Combine two node vectors into one pair vector."""
    va = a.vector if isinstance(a, FeatureVector) else np.asarray(a, dtype=float)
    vb = b.vector if isinstance(b, FeatureVector) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    if op == "average":
        out = (va + vb) / 2
    elif op == "concat":
        out = np.concatenate([va, vb])
    elif op == "hadamard":
        out = va * vb
    elif op == "weighted-l1":
        out = np.abs(va - vb)
    elif op == "weighted-l2":
        out = (va - vb) ** 2
    else:
        raise ValueError(f"unknown operator {op!r}; expected one of {OPERATORS}")
    empty = any(isinstance(x, FeatureVector) and x.empty for x in (a, b))
    return FeatureVector(out, op, empty)


def node_features(
    kind: str,
    nodes,
    table: EmbeddingTable,
    g: KnowledgeGraph | None = None,
    d: MetaPathDictionary | None = None,
    top_k: int | None = None,
) -> dict[int, FeatureVector]:
    if kind == "node-type":
        if g is None:
            raise ValueError("node-type features need the graph")
        return {v: node_embedding_types(v, g, table) for v in nodes}
    if kind == "node-mp":
        if d is None:
            raise ValueError("node-mp features need a meta-path dictionary")
        return {v: node_embedding_mp(v, d, table, top_k) for v in nodes}
    raise ValueError(f"unknown node feature kind {kind!r}")


def write_features(rows, path) -> None:
    """``id<TAB>v1 ... vd`` lines; ``rows`` yields ``(id_string, FeatureVector)``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, fv in rows:
            fh.write(f"{key}\t{' '.join(f'{x:.8g}' for x in fv.vector)}\n")
