"""In-memory heterogeneous knowledge graph, taxonomy handling and snapshot diffs.

Nodes and types are addressed by dense integer ids; names live in
:class:`NameIndex` side tables. The graph is treated as immutable once built.
"""

from __future__ import annotations

import graphlib
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import IntegrityError, ParseError, TaxonomyError

log = logging.getLogger(__name__)

UNTYPED = "__untyped__"


class NameIndex:
    """Bijective mapping between names and contiguous ids starting at 0."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._names.append(name)
            self._ids[name] = idx
        return idx

    def id(self, name: str) -> int:
        return self._ids[name]

    def get(self, name: str, default=None):
        return self._ids.get(name, default)

    def name(self, idx: int) -> str:
        return self._names[idx]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __contains__(self, name) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, NameIndex) and self._names == other._names

    def __repr__(self) -> str:
        return f"NameIndex({self._names!r})"


class KnowledgeGraph:
    """Typed multigraph.

    ``edges`` holds deduplicated directed ``(src, dst, edge_type)`` triples.
    ``adjacency[v]`` lists ``(neighbor, edge_type)`` for every edge incident
    to ``v`` regardless of direction; mining only ever uses this view.
    """

    def __init__(
        self,
        node_names: NameIndex,
        node_types: list[frozenset[int]],
        type_names: NameIndex,
        edge_type_names: NameIndex,
        edges: Iterable[tuple[int, int, int]],
        directed: bool = True,
    ):
        if len(node_types) != len(node_names):
            raise IntegrityError("node_types must have one entry per node")
        self.node_names = node_names
        self.node_types = [frozenset(t) for t in node_types]
        self.type_names = type_names
        self.edge_type_names = edge_type_names
        self.directed = directed

        n = len(node_names)
        seen = set()
        uniq = []
        for u, v, r in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise IntegrityError(f"edge ({u}, {v}) references an unknown node")
            if not 0 <= r < len(edge_type_names):
                raise IntegrityError(f"edge type id {r} out of range")
            if (u, v, r) not in seen:
                seen.add((u, v, r))
                uniq.append((u, v, r))
        self.edges: list[tuple[int, int, int]] = uniq
        self._edge_set = seen
        self._pairs = {(min(u, v), max(u, v)) for u, v, _ in uniq}

        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for u, v, r in uniq:
            adj[u].append((v, r))
            if u != v:
                adj[v].append((u, r))
        self.adjacency = adj

    @property
    def num_nodes(self) -> int:
        return len(self.node_names)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        return self.adjacency[v]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, u: int, v: int, r: int) -> bool:
        return (u, v, r) in self._edge_set

    def connected(self, u: int, v: int) -> bool:
        """True if any edge of any type joins u and v, in either direction."""
        return (min(u, v), max(u, v)) in self._pairs

    def primary_type(self, v: int) -> int:
        """Lowest type id of node ``v`` (the first-type convention)."""
        return min(self.node_types[v])

    def node_id(self, name: str) -> int:
        return self.node_names.id(name)

    def edge_names(self) -> set[tuple[str, str, str]]:
        nn, en = self.node_names, self.edge_type_names
        return {(nn.name(u), nn.name(v), en.name(r)) for u, v, r in self.edges}

    def type_name_sets(self) -> list[frozenset[str]]:
        return [frozenset(self.type_names.name(t) for t in ts) for ts in self.node_types]

    def __repr__(self) -> str:
        return (
            f"KnowledgeGraph(|V|={self.num_nodes}, |E|={self.num_edges}, "
            f"node_types={len(self.type_names)}, edge_types={len(self.edge_type_names)})"
        )


@dataclass
class Taxonomy:
    names: NameIndex
    parents: list[set[int]]

    @property
    def roots(self) -> list[int]:
        return [t for t, ps in enumerate(self.parents) if not ps]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "Taxonomy":
        names = NameIndex()
        parents: list[set[int]] = []
        for child, parent in pairs:
            for name in (child, parent):
                if name not in names:
                    names.add(name)
                    parents.append(set())
            parents[names.id(child)].add(names.id(parent))
        return cls(names, parents)


@dataclass
class SnapshotDiff:
    """Edges and nodes present in a later snapshot only, addressed by name."""

    new_edges: list[tuple[str, str, str]]
    touches_new_node: list[bool]
    new_nodes: set[str] = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.new_edges)

    def eligible_edges(self) -> list[tuple[str, str, str]]:
        return [e for e, t in zip(self.new_edges, self.touches_new_node) if not t]


def _data_lines(path):
    """Yield ``(lineno, fields)`` for non-empty, non-comment lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line.split("\t")


def read_schema(path) -> tuple[NameIndex, NameIndex]:
    node_rows, edge_rows = [], []
    for lineno, fields in _data_lines(path):
        if len(fields) != 3 or fields[0] not in ("node_type", "edge_type"):
            raise ParseError(path, lineno, "expected 'node_type|edge_type<TAB>id<TAB>name'")
        try:
            idx = int(fields[1])
        except ValueError:
            raise ParseError(path, lineno, f"bad id {fields[1]!r}") from None
        (node_rows if fields[0] == "node_type" else edge_rows).append((idx, fields[2]))
    out = []
    for rows in (node_rows, edge_rows):
        rows.sort()
        if [i for i, _ in rows] != list(range(len(rows))):
            raise ParseError(path, 0, "schema ids must be contiguous from 0")
        out.append(NameIndex(name for _, name in rows))
    return out[0], out[1]


def load_graph(
    nodes_file,
    edges_file,
    schema: tuple[NameIndex, NameIndex] | None = None,
    fill_untyped: bool = True,
) -> KnowledgeGraph:
    """Read a graph from the nodes/edges TSV pair.

    ``schema`` pins the node-type and edge-type id dictionaries (new names are
    appended). Nodes without a type list receive :data:`UNTYPED` unless
    ``fill_untyped`` is false, in which case they are left empty for a later
    :func:`assign_node_types`.
    """
    type_names = NameIndex(schema[0]) if schema else NameIndex()
    edge_type_names = NameIndex(schema[1]) if schema else NameIndex()
    node_names = NameIndex()
    node_types: list[set[int]] = []

    for lineno, fields in _data_lines(nodes_file):
        if len(fields) > 2 or not fields[0]:
            raise ParseError(nodes_file, lineno, "expected 'node<TAB>type[,type...]'")
        name = fields[0]
        types = [t for t in fields[1].split(",") if t] if len(fields) == 2 else []
        if name in node_names:
            idx = node_names.id(name)
        else:
            idx = node_names.add(name)
            node_types.append(set())
        node_types[idx].update(type_names.add(t) for t in types)

    edges = []
    for lineno, fields in _data_lines(edges_file):
        if len(fields) != 3 or not all(fields):
            raise ParseError(edges_file, lineno, "expected 'src<TAB>dst<TAB>edge_type'")
        src, dst, rel = fields
        for endpoint in (src, dst):
            if endpoint not in node_names:
                raise IntegrityError(f"{edges_file}:{lineno}: unknown node {endpoint!r}")
        edges.append((node_names.id(src), node_names.id(dst), edge_type_names.add(rel)))

    if fill_untyped and any(not ts for ts in node_types):
        untyped = type_names.add(UNTYPED)
        for ts in node_types:
            if not ts:
                ts.add(untyped)
    return KnowledgeGraph(
        node_names, [frozenset(ts) for ts in node_types], type_names, edge_type_names, edges
    )


def load_graph_dir(path, schema=None) -> KnowledgeGraph:
    """Load a graph written by :func:`save_graph`."""
    path = Path(path)
    if schema is None and (path / "schema.tsv").exists():
        schema = read_schema(path / "schema.tsv")
    return load_graph(path / "nodes.tsv", path / "edges.tsv", schema=schema)


def save_graph(g: KnowledgeGraph, out_dir) -> None:
    """Write ``nodes.tsv``, ``edges.tsv`` and ``schema.tsv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tn, en, nn = g.type_names, g.edge_type_names, g.node_names
    with open(out / "schema.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# kind\tid\tname\n")
        for i, name in enumerate(tn):
            fh.write(f"node_type\t{i}\t{name}\n")
        for i, name in enumerate(en):
            fh.write(f"edge_type\t{i}\t{name}\n")
    with open(out / "nodes.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for v in range(g.num_nodes):
            types = ",".join(tn.name(t) for t in sorted(g.node_types[v]))
            fh.write(f"{nn.name(v)}\t{types}\n")
    with open(out / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v, r in g.edges:
            fh.write(f"{nn.name(u)}\t{nn.name(v)}\t{en.name(r)}\n")


def load_taxonomy(path) -> Taxonomy:
    pairs = []
    for lineno, fields in _data_lines(path):
        if len(fields) != 2 or not all(fields):
            raise ParseError(path, lineno, "expected 'child_type<TAB>parent_type'")
        pairs.append((fields[0], fields[1]))
    return Taxonomy.from_pairs(pairs)


def taxonomy_depths(tax: Taxonomy) -> list[int]:
    """Level of each type counted from 1 at the roots (shortest route down)."""
    children: list[list[int]] = [[] for _ in tax.parents]
    for child, ps in enumerate(tax.parents):
        for p in ps:
            children[p].append(child)
    depth = [0] * len(tax.parents)
    queue = deque()
    for r in tax.roots:
        depth[r] = 1
        queue.append(r)
    while queue:
        t = queue.popleft()
        for c in children[t]:
            if depth[c] == 0:
                depth[c] = depth[t] + 1
                queue.append(c)
    return depth


def _topological_order(tax: Taxonomy) -> list[int]:
    sorter = graphlib.TopologicalSorter({t: ps for t, ps in enumerate(tax.parents)})
    try:
        return list(sorter.static_order())
    except graphlib.CycleError as exc:
        cycle = [tax.names.name(t) for t in exc.args[1]]
        raise TaxonomyError(f"cycle in taxonomy: {' -> '.join(cycle)}") from None


def reduce_taxonomy(
    tax: Taxonomy, depth_limit: int, exclude_root: bool = False
) -> dict[int, frozenset[int]]:
    """Map each type to itself plus its ancestors, keeping levels <= depth_limit.

    Levels count from 1 at the roots, so a type below the limit inherits the
    labels of its ancestors down to level ``depth_limit``. With several
    parents the ancestor set is the union over all chains. ``exclude_root``
    drops root types from every label set unless that would empty it.
    """
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    order = _topological_order(tax)
    depth = taxonomy_depths(tax)
    ancestors: dict[int, frozenset[int]] = {}
    for t in order:
        acc = {t}
        for p in tax.parents[t]:
            acc |= ancestors[p]
        ancestors[t] = frozenset(acc)

    roots = set(tax.roots)
    reduced = {}
    for t in range(len(tax.parents)):
        labels = {a for a in ancestors[t] if depth[a] <= depth_limit}
        if exclude_root and labels - roots:
            labels -= roots
        reduced[t] = frozenset(labels)
    return reduced


def _resolve_edge_type(g: KnowledgeGraph, edge_type) -> int:
    if isinstance(edge_type, str):
        if edge_type not in g.edge_type_names:
            raise IntegrityError(f"unknown edge type {edge_type!r}")
        return g.edge_type_names.id(edge_type)
    if not 0 <= edge_type < len(g.edge_type_names):
        raise IntegrityError(f"unknown edge type id {edge_type}")
    return edge_type


def assign_node_types(
    g: KnowledgeGraph,
    tax: Taxonomy,
    instance_of,
    depth_limit: int,
    exclude_root: bool = False,
) -> KnowledgeGraph:
    """Type every node from the class hierarchy.

    A node whose name is a taxonomy class keeps that class's reduced label set;
    every node also receives the reduced sets of all classes it points to via
    ``instance_of``. Types already present on the node are kept. Nodes left
    without any type get :data:`UNTYPED`.
    """
    rel = _resolve_edge_type(g, instance_of)
    reduced = reduce_taxonomy(tax, depth_limit, exclude_root=exclude_root)

    type_names = NameIndex(tax.names)
    old_to_new = {t: type_names.add(g.type_names.name(t)) for t in range(len(g.type_names))}
    untyped_old = g.type_names.get(UNTYPED)

    def class_labels(node: int) -> frozenset[int]:
        t = tax.names.get(g.node_names.name(node))
        return reduced[t] if t is not None else frozenset()

    labels: list[set[int]] = []
    for v in range(g.num_nodes):
        labels.append({old_to_new[t] for t in g.node_types[v] if t != untyped_old})
        labels[v] |= class_labels(v)
    for u, v, r in g.edges:
        if r == rel:
            labels[u] |= class_labels(v)

    orphans = [v for v in range(g.num_nodes) if not labels[v]]
    if orphans:
        log.warning("%d node(s) have no type; assigned %s", len(orphans), UNTYPED)
        untyped = type_names.add(UNTYPED)
        for v in orphans:
            labels[v].add(untyped)
    return KnowledgeGraph(
        g.node_names,
        [frozenset(ls) for ls in labels],
        type_names,
        g.edge_type_names,
        g.edges,
        g.directed,
    )


def diff_snapshots(g0: KnowledgeGraph, g1: KnowledgeGraph) -> SnapshotDiff:
    """Edges and nodes of ``g1`` absent from ``g0``, matched by name."""
    old_nodes = set(g0.node_names)
    new_nodes = {n for n in g1.node_names if n not in old_nodes}
    old_edges = g0.edge_names()
    nn, en = g1.node_names, g1.edge_type_names
    new_edges, touches = [], []
    for u, v, r in g1.edges:
        e = (nn.name(u), nn.name(v), en.name(r))
        if e not in old_edges:
            new_edges.append(e)
            touches.append(e[0] in new_nodes or e[1] in new_nodes)
    return SnapshotDiff(new_edges, touches, new_nodes)


def write_diff(diff: SnapshotDiff, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (u, v, r), t in zip(diff.new_edges, diff.touches_new_node):
            fh.write(f"{u}\t{v}\t{r}\t{int(t)}\n")


def read_diff(path) -> SnapshotDiff:
    edges, touches, new_nodes = [], [], set()
    for lineno, fields in _data_lines(path):
        if len(fields) != 4 or fields[3] not in ("0", "1"):
            raise ParseError(path, lineno, "expected 'src<TAB>dst<TAB>edge_type<TAB>0|1'")
        edges.append((fields[0], fields[1], fields[2]))
        touches.append(fields[3] == "1")
    # node membership is not stored in the TSV; endpoints flagged as new are
    # all we can recover
    return SnapshotDiff(edges, touches, new_nodes)
