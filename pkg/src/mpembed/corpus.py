"""Skipgram corpus construction: sentences, vocabulary and token n-grams.

One sentence is a shuffled sample of the meta-paths joining one node pair;
one word is one serialized meta-path. Sub-word units are contiguous runs of
meta-path tokens (``n3``, ``e7``, ``n3.e7`` ...), hashed into a fixed number
of buckets. Every word additionally owns an unhashed row placed after the
buckets.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError
from .metapath import MetaPath, parse, serialize, word_tokens
from .miner import MetaPathDictionary

__all__ = [
    "serialize_metapath",
    "parse_metapath",
    "fnv1a",
    "extract_ngrams",
    "build_sentences",
    "Vocabulary",
    "write_corpus",
    "read_corpus",
]

DEFAULT_BUCKETS = 2_000_000

serialize_metapath = serialize
parse_metapath = parse


def fnv1a(text: str) -> int:
    """32-bit FNV-1a hash of the UTF-8 bytes of ``text``."""
    h = 0x811C9DC5
    for b in text.encode("utf-8"):
        h ^= b
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


def ngram_strings(word: str, min_n: int, max_n: int) -> list[str]:
    """Contiguous token runs of length ``min_n..max_n``, shortest first."""
    if min_n < 1 or max_n < min_n:
        raise ValueError("need 1 <= min_n <= max_n")
    toks = word_tokens(word)
    out = []
    for n in range(min_n, min(max_n, len(toks)) + 1):
        for i in range(len(toks) - n + 1):
            out.append(".".join(toks[i : i + n]))
    return out


def extract_ngrams(
    word: str, min_n: int, max_n: int, buckets: int, word_index: int | None = None
) -> list[int]:
    """Bucket ids of the token n-grams of ``word``.

    When ``word_index`` is given, the word's own row ``buckets + word_index``
    is appended.
    """
    ids = [fnv1a(g) % buckets for g in ngram_strings(word, min_n, max_n)]
    if word_index is not None:
        ids.append(buckets + word_index)
    return ids


def build_sentences(
    d: MetaPathDictionary,
    sentence_length: int = 8,
    samples_per_pair: int = 10,
    seed: int = 0,
    weighted: bool = True,
) -> list[list[str]]:
    """Sample ``samples_per_pair`` sentences from every pair with >= 2 meta-paths.

    Each sentence holds ``min(sentence_length, m)`` distinct meta-paths drawn
    without replacement (weighted by discovery count when ``weighted``) and
    put in random order. Every pair draws from its own generator seeded by
    ``(seed, u, v)``.
    """
    if sentence_length < 2:
        raise ValueError("sentence_length must be >= 2")
    if samples_per_pair < 1:
        raise ValueError("samples_per_pair must be >= 1")
    sentences = []
    for u, v in d.pairs():
        counts = d.counts(u, v)
        m = len(counts)
        if m < 2:
            continue
        mps = sorted(counts)
        words = np.array([serialize(mp) for mp in mps], dtype=object)
        rng = np.random.default_rng([seed, u, v])
        k, n = samples_per_pair, min(sentence_length, m)
        if n == m:
            picks = np.tile(np.arange(m), (k, 1))
        else:
            w = np.array([counts[mp] for mp in mps], dtype=float) if weighted else np.ones(m)
            # weighted sampling without replacement: keep the n largest log(U)/w
            keys = np.log(rng.random((k, m))) / w
            picks = np.argpartition(-keys, n - 1, axis=1)[:, :n]
        picks = rng.permuted(picks, axis=1)
        sentences.extend(words[row].tolist() for row in picks)
    return sentences


class Vocabulary:
    """Word index, frequencies and the per-word n-gram id lists."""

    def __init__(
        self,
        words: Sequence[str],
        counts: Sequence[int],
        min_n: int = 1,
        max_n: int = 3,
        buckets: int = DEFAULT_BUCKETS,
    ):
        if buckets < 1:
            raise ValueError("buckets must be >= 1")
        if min_n < 1 or max_n < min_n:
            raise ValueError("need 1 <= min_n <= max_n")
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate word in vocabulary")
        self.counts = np.asarray(counts, dtype=np.int64)
        self.min_n, self.max_n, self.buckets = min_n, max_n, buckets

        ptr = [0]
        ids: list[int] = []
        for i, w in enumerate(self.words):
            ids.extend(extract_ngrams(w, min_n, max_n, buckets, i))
            ptr.append(len(ids))
        self.gram_ptr = np.asarray(ptr, dtype=np.int64)
        self.gram_ids = np.asarray(ids, dtype=np.int64)

    @classmethod
    def build(
        cls,
        sentences: Iterable[Sequence[str]],
        min_count: int = 1,
        min_n: int = 1,
        max_n: int = 3,
        buckets: int = DEFAULT_BUCKETS,
    ) -> "Vocabulary":
        freq = Counter()
        for s in sentences:
            freq.update(s)
        kept = sorted(((w, c) for w, c in freq.items() if c >= min_count), key=lambda x: (-x[1], x[0]))
        return cls([w for w, _ in kept], [c for _, c in kept], min_n, max_n, buckets)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word) -> bool:
        return word in self.index

    @property
    def num_rows(self) -> int:
        """Rows of the input matrix: all buckets plus one per word."""
        return self.buckets + len(self.words)

    def grams(self, word) -> np.ndarray:
        i = word if isinstance(word, (int, np.integer)) else self.index[word]
        return self.gram_ids[self.gram_ptr[i] : self.gram_ptr[i + 1]]

    def oov_grams(self, word: str) -> list[int]:
        """Bucket ids for a word outside the vocabulary (no whole-word row)."""
        return extract_ngrams(word, self.min_n, self.max_n, self.buckets)

    def token_bucket(self, token: str) -> int:
        return fnv1a(token) % self.buckets

    def bucket_owners(self) -> dict[int, set[str]]:
        """Distinct gram strings hashed to each used bucket."""
        owners: dict[int, set[str]] = {}
        for w in self.words:
            for g in ngram_strings(w, self.min_n, self.max_n):
                owners.setdefault(fnv1a(g) % self.buckets, set()).add(g)
        return owners

    def encode(self, sentences: Iterable[Sequence[str]]) -> tuple[np.ndarray, np.ndarray]:
        """Flatten sentences to ``(word_ids, offsets)``; unknown words are dropped."""
        ids: list[int] = []
        offsets = [0]
        index = self.index
        for s in sentences:
            ids.extend(index[w] for w in s if w in index)
            offsets.append(len(ids))
        return np.asarray(ids, dtype=np.int64), np.asarray(offsets, dtype=np.int64)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for w, c in zip(self.words, self.counts):
                fh.write(f"{w}\t{int(c)}\n")

    @classmethod
    def read(cls, path, min_n=1, max_n=3, buckets=DEFAULT_BUCKETS) -> "Vocabulary":
        words, counts = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                fields = line.rstrip("\n").split("\t")
                if len(fields) != 2:
                    raise ParseError(path, lineno, "expected 'word<TAB>count'")
                words.append(fields[0])
                counts.append(int(fields[1]))
        return cls(words, counts, min_n, max_n, buckets)


def write_corpus(sentences: Iterable[Sequence[str]], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sentences:
            fh.write(" ".join(s) + "\n")
            n += 1
    return n


def read_corpus(path) -> list[list[str]]:
    with open(Path(path), encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


def metapath_words(mps: Iterable[MetaPath]) -> list[str]:
    return [serialize(mp) for mp in mps]
