"""Meta-path tuples and their word serialization.

A meta-path is a tuple of ints alternating node-type and edge-type ids,
always with an odd length: ``(n0, e0, n1, e1, ..., nk)``.
"""

from __future__ import annotations

import re

MetaPath = tuple[int, ...]

_TOKEN = re.compile(r"([ne])(\d+)\Z")


def is_metapath(mp) -> bool:
    return isinstance(mp, tuple) and len(mp) % 2 == 1 and all(
        isinstance(x, int) and x >= 0 for x in mp
    )


def node_positions(mp: MetaPath) -> int:
    """Number of node positions (the meta-path length ``t``)."""
    return (len(mp) + 1) // 2


def reverse(mp: MetaPath) -> MetaPath:
    return mp[::-1]


def tokens(mp: MetaPath) -> list[str]:
    return [("n" if i % 2 == 0 else "e") + str(x) for i, x in enumerate(mp)]


def serialize(mp: MetaPath) -> str:
    """``(3, 7, 5)`` -> ``"n3.e7.n5"``."""
    if not mp or len(mp) % 2 == 0:
        raise ValueError(f"not a meta-path: {mp!r}")
    return ".".join(tokens(mp))


def parse(word: str) -> MetaPath:
    out = []
    for i, tok in enumerate(word.split(".")):
        m = _TOKEN.match(tok)
        if m is None or m.group(1) != ("n" if i % 2 == 0 else "e"):
            raise ValueError(f"malformed meta-path word {word!r}")
        out.append(int(m.group(2)))
    if len(out) % 2 == 0:
        raise ValueError(f"meta-path word must end with a node type: {word!r}")
    return tuple(out)


def word_tokens(word: str) -> list[str]:
    return word.split(".")
