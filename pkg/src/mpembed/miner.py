"""Meta-path mining between node pairs.

Two traversals share one implementation: the exhaustive breadth-limited walk
enumeration and its probabilistic variant that skips start nodes and edges.
Walks may revisit nodes. Every branch of the recursion extends its own copy
of the meta-path prefix.
"""

from __future__ import annotations

import itertools
import logging
import multiprocessing
import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MiningBudgetError, ParseError
from .kg import KnowledgeGraph
from .metapath import MetaPath, node_positions, parse, reverse, serialize

log = logging.getLogger(__name__)

MULTI_TYPE_MODES = ("first-type", "cartesian")


@dataclass
class MiningConfig:
    max_length: int = 3
    node_skip_probability: float = 0.0
    edge_skip_probability: float = 0.0
    max_paths_per_node: int | None = None
    min_length: int = 1
    seed: int = 0
    multi_type_mode: str = "first-type"
    # abort once this many (pair, meta-path) records were produced
    max_records: int | None = None
    product_cap: int = 4096

    def __post_init__(self):
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")
        for name in ("node_skip_probability", "edge_skip_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.max_paths_per_node is not None and self.max_paths_per_node < 1:
            raise ValueError("max_paths_per_node must be >= 1")
        if self.multi_type_mode not in MULTI_TYPE_MODES:
            raise ValueError(f"multi_type_mode must be one of {MULTI_TYPE_MODES}")


class MetaPathDictionary:
    """Meta-paths found between node pairs, with discovery multiplicities.

    Storage is keyed on the canonical pair ``(min(u, v), max(u, v))`` with the
    meta-path oriented from the smaller id; lookups re-orient on the fly, so
    ``d[u, v]`` always reads from ``u`` to ``v``.
    """

    def __init__(self):
        self._pairs: dict[tuple[int, int], Counter] = {}
        self._partners: dict[int, set[int]] | None = None

    def add(self, u: int, v: int, mp: MetaPath, count: int = 1) -> None:
        if u > v:
            u, v, mp = v, u, reverse(mp)
        bucket = self._pairs.get((u, v))
        if bucket is None:
            bucket = self._pairs[(u, v)] = Counter()
        bucket[mp] += count
        self._partners = None

    def counts(self, u: int, v: int) -> dict[MetaPath, int]:
        if u <= v:
            return dict(self._pairs.get((u, v), {}))
        return {reverse(mp): c for mp, c in self._pairs.get((v, u), {}).items()}

    def get(self, u: int, v: int) -> list[MetaPath]:
        return sorted(self.counts(u, v))

    def __getitem__(self, key: tuple[int, int]) -> list[MetaPath]:
        return self.get(*key)

    def __contains__(self, key) -> bool:
        u, v = key
        return (min(u, v), max(u, v)) in self._pairs

    def pairs(self) -> list[tuple[int, int]]:
        """Canonical pairs in sorted order."""
        return sorted(self._pairs)

    def __len__(self) -> int:
        return len(self._pairs)

    @property
    def num_records(self) -> int:
        return sum(len(c) for c in self._pairs.values())

    def partners(self, i: int) -> set[int]:
        if self._partners is None:
            idx: dict[int, set[int]] = {}
            for u, v in self._pairs:
                idx.setdefault(u, set()).add(v)
                idx.setdefault(v, set()).add(u)
            self._partners = idx
        return self._partners.get(i, set())

    def node_counts(self, i: int) -> Counter:
        """All meta-paths with ``i`` as an endpoint, oriented away from ``i``."""
        out = Counter()
        for j in self.partners(i):
            out.update(self.counts(i, j))
        return out

    def ordered_sets(self) -> dict[tuple[int, int], set[MetaPath]]:
        """Both orientations of every pair, as plain sets (test/debug helper)."""
        out = {}
        for (u, v), c in self._pairs.items():
            out[(u, v)] = set(c)
            out[(v, u)] = {reverse(mp) for mp in c}
        return out

    def merge(self, other: "MetaPathDictionary") -> "MetaPathDictionary":
        for key, c in other._pairs.items():
            bucket = self._pairs.get(key)
            if bucket is None:
                self._pairs[key] = Counter(c)
            else:
                bucket.update(c)
        self._partners = None
        return self

    def restricted(self, keep) -> "MetaPathDictionary":
        """Copy holding only canonical pairs for which ``keep(u, v)`` is true."""
        out = MetaPathDictionary()
        out._pairs = {k: Counter(c) for k, c in self._pairs.items() if keep(*k)}
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, MetaPathDictionary) and self._pairs == other._pairs

    def __repr__(self) -> str:
        return f"MetaPathDictionary(pairs={len(self)}, records={self.num_records})"


def expand_multi_type(
    template: Sequence, mode: str = "cartesian", cap: int | None = None
) -> list[MetaPath]:
    """Turn a path of node-type sets and edge types into concrete meta-paths.

    ``template`` alternates collections of node-type ids (even positions) and
    single edge-type ids (odd positions).
    """
    if len(template) % 2 == 0:
        raise ValueError("template must have an odd number of positions")
    choices = []
    for i, pos in enumerate(template):
        if i % 2:
            choices.append((pos,))
        else:
            types = sorted(pos)
            if not types:
                raise ValueError(f"empty type set at position {i}")
            choices.append(types if mode == "cartesian" else types[:1])
    if mode not in MULTI_TYPE_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    product = itertools.product(*choices)
    if cap is not None:
        size = 1
        for c in choices:
            size *= len(c)
        if size > cap:
            log.warning("meta-path product of size %d truncated to %d", size, cap)
            product = itertools.islice(product, cap)
    return [tuple(mp) for mp in product]


class _Miner:
    def __init__(self, g: KnowledgeGraph, cfg: MiningConfig, probabilistic: bool):
        self.g = g
        self.cfg = cfg
        self.probabilistic = probabilistic
        self.first_type = [min(ts) for ts in g.node_types]
        self.out = MetaPathDictionary()
        self.records = 0

    def _record(self, u, v, nodes, edges) -> int:
        cfg = self.cfg
        if len(nodes) < cfg.min_length:
            return 0
        if cfg.multi_type_mode == "first-type":
            mps = [_interleave([self.first_type[n] for n in nodes], edges)]
        else:
            template = _interleave([self.g.node_types[n] for n in nodes], edges)
            mps = expand_multi_type(template, "cartesian", cfg.product_cap)
        for mp in mps:
            self.out.add(u, v, mp)
        self.records += len(mps)
        if cfg.max_records is not None and self.records > cfg.max_records:
            raise MiningBudgetError(
                f"mining produced more than {cfg.max_records} records", partial=self.out
            )
        return len(mps)

    def mine_from(self, u: int) -> None:
        cfg = self.cfg
        q = cfg.edge_skip_probability if self.probabilistic else 0.0
        rng = random.Random(f"{cfg.seed}:{u}") if self.probabilistic else None
        if rng is not None and rng.random() < cfg.node_skip_probability:
            return
        budget = cfg.max_paths_per_node
        found = 0
        adjacency = self.g.adjacency

        def visit(v, nodes, edges, remaining):
            nonlocal found
            found += self._record(u, v, nodes, edges)
            if budget is not None and found >= budget:
                return True
            if remaining <= 1:
                return False
            for y, r in adjacency[v]:
                if rng is not None and rng.random() < q:
                    continue
                if visit(y, nodes + (y,), edges + (r,), remaining - 1):
                    return True
            return False

        visit(u, (u,), (), cfg.max_length)


def _interleave(nodes, edges):
    out = [nodes[0]]
    for n, r in zip(nodes[1:], edges):
        out.append(r)
        out.append(n)
    return tuple(out)


def _mine(g, cfg, starts, probabilistic) -> MetaPathDictionary:
    miner = _Miner(g, cfg, probabilistic)
    for u in starts:
        miner.mine_from(u)
    return miner.out


_WORKER_STATE = {}


def _worker_run(chunk):
    g, cfg, probabilistic = _WORKER_STATE["args"]
    return _mine(g, cfg, chunk, probabilistic)


def _partition(starts: list[int], workers: int) -> list[list[int]]:
    size = -(-len(starts) // workers)
    return [starts[i : i + size] for i in range(0, len(starts), size)]


def _run(g, cfg, start_nodes, probabilistic, workers) -> MetaPathDictionary:
    starts = list(range(g.num_nodes)) if start_nodes is None else list(start_nodes)
    if workers <= 1 or len(starts) < 2:
        return _mine(g, cfg, starts, probabilistic)
    chunks = _partition(starts, workers)
    # forked children inherit the read-only graph without pickling it
    _WORKER_STATE["args"] = (g, cfg, probabilistic)
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=len(chunks), mp_context=ctx) as pool:
            parts = list(pool.map(_worker_run, chunks))
    finally:
        _WORKER_STATE.clear()
    merged = MetaPathDictionary()
    for part in parts:
        merged.merge(part)
    return merged


def mine_all(
    g: KnowledgeGraph,
    cfg: MiningConfig | None = None,
    start_nodes: Iterable[int] | None = None,
    workers: int = 1,
) -> MetaPathDictionary:
    """Enumerate the meta-paths of every walk with at most ``max_length`` nodes.

    Skip probabilities in ``cfg`` are ignored.
    """
    cfg = cfg or MiningConfig()
    return _run(g, cfg, start_nodes, False, workers)


def mine_probabilistic(
    g: KnowledgeGraph,
    cfg: MiningConfig,
    start_nodes: Iterable[int] | None = None,
    workers: int = 1,
) -> MetaPathDictionary:
    """Probabilistic mining: skip start nodes with probability p, edges with q.

    Each start node draws from its own generator seeded by ``(seed, node)``,
    so results do not depend on how start nodes are split across workers.
    """
    return _run(g, cfg, start_nodes, True, workers)


def write_dictionary(d: MetaPathDictionary, g: KnowledgeGraph, out_dir, shards: int = 1) -> list[Path]:
    """Dump as ``metapaths-<i>.tsv`` files, lines ``u<TAB>v<TAB>count<TAB>word``.

    Pairs are written in canonical orientation and sharded by their first
    node id into contiguous ranges.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shards = max(1, shards)
    paths = [out / f"metapaths-{i}.tsv" for i in range(shards)]
    handles = [open(p, "w", encoding="utf-8", newline="\n") for p in paths]
    try:
        names = g.node_names
        n = max(g.num_nodes, 1)
        for u, v in d.pairs():
            fh = handles[min(u * shards // n, shards - 1)]
            un, vn = names.name(u), names.name(v)
            for mp, c in sorted(d.counts(u, v).items()):
                fh.write(f"{un}\t{vn}\t{c}\t{serialize(mp)}\n")
    finally:
        for fh in handles:
            fh.close()
    return paths


def read_dictionary(source, g: KnowledgeGraph) -> MetaPathDictionary:
    """Load a dump written by :func:`write_dictionary` (directory or file)."""
    source = Path(source)
    files = sorted(source.glob("metapaths-*.tsv")) if source.is_dir() else [source]
    d = MetaPathDictionary()
    for path in files:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip() or line.startswith("#"):
                    continue
                fields = line.rstrip("\n").split("\t")
                if len(fields) != 4:
                    raise ParseError(path, lineno, "expected 'u<TAB>v<TAB>count<TAB>word'")
                try:
                    u, v = g.node_id(fields[0]), g.node_id(fields[1])
                    count = int(fields[2])
                    mp = parse(fields[3])
                except (KeyError, ValueError) as exc:
                    raise ParseError(path, lineno, str(exc)) from None
                d.add(u, v, mp, count)
    return d


def length_histogram(d: MetaPathDictionary) -> Counter:
    return Counter(node_positions(mp) for u, v in d.pairs() for mp in d.counts(u, v))
