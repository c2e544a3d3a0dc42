"""Synthetic graphs for tests, benchmarks and the acceptance experiments."""

from __future__ import annotations

import numpy as np

from .kg import KnowledgeGraph, NameIndex


def _graph(node_type_names, type_names, edge_type_names, edges) -> KnowledgeGraph:
    tn = NameIndex(type_names)
    nodes = NameIndex(f"v{i}" for i in range(len(node_type_names)))
    node_types = [frozenset(tn.id(t) for t in ts) for ts in node_type_names]
    return KnowledgeGraph(nodes, node_types, tn, NameIndex(edge_type_names), edges)


def random_typed_graph(
    n: int,
    max_degree: int = 4,
    n_node_types: int = 4,
    n_edge_types: int = 4,
    edge_attempts: int | None = None,
    multi_type: bool = False,
    seed: int = 0,
) -> KnowledgeGraph:
    """Random multigraph whose undirected degree never exceeds ``max_degree``."""
    rng = np.random.default_rng(seed)
    type_names = [f"T{i}" for i in range(n_node_types)]
    if multi_type:
        node_types = [
            set(rng.choice(type_names, size=rng.integers(1, 3), replace=True).tolist())
            for _ in range(n)
        ]
    else:
        node_types = [{type_names[rng.integers(n_node_types)]} for _ in range(n)]
    degree = [0] * n
    edges = set()
    for _ in range(edge_attempts if edge_attempts is not None else 2 * n):
        u, v = (int(x) for x in rng.integers(n, size=2))
        r = int(rng.integers(n_edge_types))
        ends = {u, v}
        if (u, v, r) in edges or any(degree[x] + 1 > max_degree for x in ends):
            continue
        edges.add((u, v, r))
        for x in ends:
            degree[x] += 1
    return _graph(node_types, type_names, [f"R{i}" for i in range(n_edge_types)], sorted(edges))


def circulant_graph(n: int, degree: int, n_node_types: int = 3, n_edge_types: int = 3, seed: int = 0) -> KnowledgeGraph:
    """``degree``-regular graph: node i links to i+1 .. i+degree//2 (mod n),
    plus the antipode when ``degree`` is odd (``n`` must then be even)."""
    if degree % 2 and n % 2:
        raise ValueError("odd degree needs an even node count")
    rng = np.random.default_rng(seed)
    edges = set()
    for i in range(n):
        for k in range(1, degree // 2 + 1):
            edges.add((i, (i + k) % n, int(rng.integers(n_edge_types))))
        if degree % 2 and i < n // 2:
            edges.add((i, i + n // 2, int(rng.integers(n_edge_types))))
    type_names = [f"T{i}" for i in range(n_node_types)]
    node_types = [{type_names[rng.integers(n_node_types)]} for _ in range(n)]
    return _graph(node_types, type_names, [f"R{i}" for i in range(n_edge_types)], sorted(edges))


def two_block_snapshots(
    block_size: int = 500,
    p_in: float = 0.02,
    p_out: float = 0.001,
    holdout: float = 0.1,
    seed: int = 0,
) -> tuple[KnowledgeGraph, KnowledgeGraph, np.ndarray]:
    """Two communities with disjoint node-type vocabularies.

    Block 0 nodes take one type from {A, B}, block 1 from {C, D}. Within-block
    edges use edge types {p, q} / {s, t}; cross edges use ``x``. A random
    ``holdout`` share of the edges exists only in the second snapshot.
    Returns ``(g0, g1, block_of_node)``.
    """
    rng = np.random.default_rng(seed)
    n = 2 * block_size
    block = np.repeat([0, 1], block_size)
    type_sets = (("A", "B"), ("C", "D"))
    rel_sets = (("p", "q"), ("s", "t"))
    node_types = [{type_sets[b][rng.integers(2)]} for b in block]

    iu, ju = np.triu_indices(n, k=1)
    same = block[iu] == block[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edge_types = ["p", "q", "s", "t", "x"]
    edges = []
    for u, v, s in zip(iu[keep].tolist(), ju[keep].tolist(), same[keep].tolist()):
        r = rel_sets[block[u]][rng.integers(2)] if s else "x"
        edges.append((u, v, edge_types.index(r)))
    order = rng.permutation(len(edges))
    n_hold = int(round(holdout * len(edges)))
    held = set(order[:n_hold].tolist())
    e0 = [e for i, e in enumerate(edges) if i not in held]
    names = ["A", "B", "C", "D"]
    g0 = _graph(node_types, names, edge_types, e0)
    g1 = _graph(node_types, names, edge_types, edges)
    return g0, g1, block
