import logging
from pathlib import Path

import pytest

from mpembed.kg import KnowledgeGraph, NameIndex

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "src" / "mpembed" / "data" / "fixture"


def make_graph(types, edges, edge_types=None):
    """Build a graph from ``types`` (one type name, or a set of names, per
    node) and ``edges`` given as ``(u, v, edge_type_name)`` with int nodes."""
    type_names = NameIndex()
    node_types = []
    for t in types:
        names = [t] if isinstance(t, str) else sorted(t)
        node_types.append(frozenset(type_names.add(n) for n in names))
    etn = NameIndex(edge_types or ())
    triples = [(u, v, etn.add(r)) for u, v, r in edges]
    nodes = NameIndex(str(i) for i in range(len(types)))
    return KnowledgeGraph(nodes, node_types, type_names, etn, triples)


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    return _write


@pytest.fixture(autouse=True)
def _quiet_numba():
    logging.getLogger("numba").setLevel(logging.WARNING)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
