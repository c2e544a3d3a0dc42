"""Skipgram with negative sampling over token n-gram sums.

A word's input vector is the sum of the rows of its n-gram buckets plus its
own row; the context side keeps one plain vector per word. The hot loop is
compiled with numba. Single-worker training is bit-reproducible for a given
seed; several workers update the shared matrices without locks.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .corpus import DEFAULT_BUCKETS, Vocabulary
from .errors import OutOfVocabularyError, TrainingDivergedError, UnsupportedConfigError

log = logging.getLogger(__name__)

NOISE_MODES = ("unigram", "uniform")


@dataclass
class TrainConfig:
    dim: int = 64
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_n: int = 1
    max_n: int = 3
    buckets: int = DEFAULT_BUCKETS
    seed: int = 0
    workers: int = 1
    noise: str = "unigram"
    average_grams: bool = False
    min_count: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.min_n < 1 or self.max_n < self.min_n:
            raise ValueError("need 1 <= min_n <= max_n")
        if self.noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    input: np.ndarray
    output: np.ndarray
    config: TrainConfig
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.input.shape[1]

    def grams(self, word, allow_oov: bool = False) -> np.ndarray:
        if word in self.vocab:
            return self.vocab.grams(word)
        if not allow_oov:
            raise OutOfVocabularyError(f"unknown meta-path word {word!r}")
        return np.asarray(self.vocab.oov_grams(word), dtype=np.int64)

    def word_vector(self, word, allow_oov: bool = False) -> np.ndarray:
        g = self.grams(word, allow_oov)
        if len(g) == 0:
            return np.zeros(self.dim)
        v = self.input[g].astype(np.float64).sum(axis=0)
        if self.config.average_grams:
            v /= len(g)
        return v

    def context_vector(self, word) -> np.ndarray:
        if word not in self.vocab:
            raise OutOfVocabularyError(f"unknown meta-path word {word!r}")
        return self.output[self.vocab.index[word]].astype(np.float64)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.input).all() and np.isfinite(self.output).all())


# --- numerics shared by the kernel and the reference implementation ---------


@njit(cache=True)
def _logistic_loss(x):
    # log(1 + exp(-x)), linear for very negative x
    if x < -30.0:
        return -x
    return math.log1p(math.exp(-x))


@njit(cache=True)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def logistic_loss(x: float) -> float:
    return float(_logistic_loss(float(x)))


def pair_loss(inp, out, grams, context, negatives, average=False) -> float:
    """Loss of one (word, context, negatives) triple in float64."""
    h = inp[grams].astype(np.float64).sum(axis=0)
    if average:
        h /= len(grams)
    loss = logistic_loss(h @ out[context])
    for n in negatives:
        loss += logistic_loss(-(h @ out[n]))
    return loss


def pair_gradient(inp, out, grams, context, negatives, average=False):
    """Analytic gradient of :func:`pair_loss`.

    Returns ``(d_input, d_output)`` as dense arrays shaped like the matrices.
    """
    inp = inp.astype(np.float64)
    out = out.astype(np.float64)
    h = inp[grams].sum(axis=0)
    scale = 1.0 / len(grams) if average else 1.0
    h *= scale
    d_in = np.zeros_like(inp)
    d_out = np.zeros_like(out)
    g = _sigmoid(h @ out[context]) - 1.0
    dh = g * out[context]
    d_out[context] += g * h
    for n in negatives:
        g = _sigmoid(h @ out[n])
        dh += g * out[n]
        d_out[n] += g * h
    for gram in grams:
        d_in[gram] += scale * dh
    return d_in, d_out


# --- compiled training kernel ------------------------------------------------


@njit(cache=True)
def _next_double(state):
    # splitmix64
    s = state[0] + np.uint64(0x9E3779B97F4A7C15)
    state[0] = s
    z = (s ^ (s >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _sgd_pair(inp, out, grams, context, negs, lr, average, h, dh):
    """One SGD step on a (word, context, negatives) triple.

    Entries of ``negs`` equal to -1 are ignored. ``h`` and ``dh`` are scratch
    buffers of length dim. Returns the loss before the step.
    """
    d = inp.shape[1]
    ng = grams.shape[0]
    scale = 1.0 / ng if average else 1.0
    for k in range(d):
        h[k] = 0.0
        dh[k] = 0.0
    for gi in range(ng):
        row = grams[gi]
        for k in range(d):
            h[k] += inp[row, k]
    for k in range(d):
        h[k] *= scale

    s = 0.0
    for k in range(d):
        s += h[k] * out[context, k]
    loss = _logistic_loss(s)
    g = _sigmoid(s) - 1.0
    for k in range(d):
        dh[k] += g * out[context, k]
        out[context, k] -= lr * g * h[k]

    for j in range(negs.shape[0]):
        n = negs[j]
        if n < 0:
            continue
        s = 0.0
        for k in range(d):
            s += h[k] * out[n, k]
        loss += _logistic_loss(-s)
        g = _sigmoid(s)
        for k in range(d):
            dh[k] += g * out[n, k]
            out[n, k] -= lr * g * h[k]

    for gi in range(ng):
        row = grams[gi]
        for k in range(d):
            inp[row, k] -= lr * scale * dh[k]
    return loss


@njit(cache=True, nogil=True)
def _train_range(
    inp, out, words, offsets, s_begin, s_end, gram_ptr, gram_ids, noise_cdf,
    uniform_noise, window, negatives, average, lr0, done_before, total_tokens, state,
):
    """Train one pass over sentences [s_begin, s_end).

    Returns ``(loss_sum, n_pairs, status)``; status is the 1-based token
    position at which a non-finite loss appeared, or 0.
    """
    d = inp.shape[1]
    h = np.empty(d, dtype=np.float64)
    dh = np.empty(d, dtype=np.float64)
    negs = np.empty(negatives, dtype=np.int64)
    n_words = noise_cdf.shape[0]
    total_mass = noise_cdf[n_words - 1]
    loss_sum = 0.0
    n_pairs = 0
    processed = done_before
    for s in range(s_begin, s_end):
        a = offsets[s]
        b = offsets[s + 1]
        for i in range(a, b):
            lr = lr0 * (1.0 - processed / total_tokens)
            if lr < 0.0:
                lr = 0.0
            processed += 1
            t = words[i]
            grams = gram_ids[gram_ptr[t]:gram_ptr[t + 1]]
            lo = max(a, i - window)
            hi = min(b, i + window + 1)
            for j in range(lo, hi):
                if j == i:
                    continue
                c = words[j]
                for q in range(negatives):
                    u = _next_double(state)
                    if uniform_noise:
                        n = int(u * n_words)
                        if n >= n_words:
                            n = n_words - 1
                    else:
                        n = np.searchsorted(noise_cdf, u * total_mass, side="right")
                        if n >= n_words:
                            n = n_words - 1
                    negs[q] = -1 if n == c else n
                loss = _sgd_pair(inp, out, grams, c, negs, lr, average, h, dh)
                if not math.isfinite(loss):
                    return loss_sum, n_pairs, processed
                loss_sum += loss
                n_pairs += 1
    return loss_sum, n_pairs, 0


def noise_distribution(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    """Cumulative unigram^power noise distribution over word ids."""
    return np.cumsum(np.asarray(counts, dtype=np.float64) ** power)


def init_table(vocab: Vocabulary, cfg: TrainConfig) -> EmbeddingTable:
    rng = np.random.default_rng(cfg.seed)
    bound = 1.0 / cfg.dim
    inp = rng.uniform(-bound, bound, size=(vocab.num_rows, cfg.dim)).astype(np.float32)
    out = np.zeros((len(vocab), cfg.dim), dtype=np.float32)
    return EmbeddingTable(vocab, inp, out, cfg)


def _seed_state(*parts) -> np.ndarray:
    seq = np.random.SeedSequence(list(parts))
    return seq.generate_state(1, dtype=np.uint64)


def _ranges(offsets: np.ndarray, workers: int) -> list[tuple[int, int]]:
    n = len(offsets) - 1
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def train(
    sentences,
    cfg: TrainConfig,
    vocab: Vocabulary | None = None,
) -> EmbeddingTable:
    """Train meta-path embeddings on a corpus of sentences (lists of words)."""
    if vocab is None:
        vocab = Vocabulary.build(sentences, cfg.min_count, cfg.min_n, cfg.max_n, cfg.buckets)
    elif (vocab.min_n, vocab.max_n, vocab.buckets) != (cfg.min_n, cfg.max_n, cfg.buckets):
        raise UnsupportedConfigError("vocabulary n-gram settings differ from the train config")
    if len(vocab) == 0:
        raise ValueError("empty corpus")
    words, offsets = vocab.encode(sentences)
    if len(words) == 0:
        raise ValueError("empty corpus")

    table = init_table(vocab, cfg)
    if cfg.noise == "unigram":
        cdf = noise_distribution(vocab.counts)
    else:
        cdf = np.arange(1, len(vocab) + 1, dtype=np.float64)
    common = (
        vocab.gram_ptr, vocab.gram_ids, cdf, cfg.noise == "uniform",
        cfg.window, cfg.negatives, cfg.average_grams, cfg.lr,
    )

    if cfg.workers == 1:
        ranges = [(0, len(offsets) - 1)]
        states = [_seed_state(cfg.seed, 0)]
    else:
        ranges = _ranges(offsets, cfg.workers)
        states = [_seed_state(cfg.seed, w + 1) for w in range(len(ranges))]
    range_tokens = [int(offsets[b] - offsets[a]) for a, b in ranges]

    def run(w, epoch):
        a, b = ranges[w]
        total = max(1, range_tokens[w] * cfg.epochs)
        return _train_range(
            table.input, table.output, words, offsets, a, b, *common,
            float(epoch * range_tokens[w]), float(total), states[w],
        )

    pool = ThreadPoolExecutor(len(ranges)) if len(ranges) > 1 else None
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            if pool is None:
                results = [run(0, epoch)]
            else:
                results = list(pool.map(lambda w: run(w, epoch), range(len(ranges))))
            loss = sum(r[0] for r in results)
            pairs = sum(r[1] for r in results)
            bad = [r[2] for r in results if r[2]]
            if bad or not table.is_finite():
                raise TrainingDivergedError(
                    f"non-finite value in epoch {epoch + 1} near token {bad[0] if bad else '?'} "
                    f"(lr={cfg.lr}, dim={cfg.dim}); lower the learning rate or enable average_grams"
                )
            table.epoch_losses.append(loss / max(pairs, 1))
            log.info(
                "epoch %d/%d loss=%.6f pairs=%d (%.2fs)",
                epoch + 1, cfg.epochs, table.epoch_losses[-1], pairs, time.perf_counter() - t0,
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return table


# --- read API ------------------------------------------------------------------


def emb_word(word: str, table: EmbeddingTable, allow_oov: bool = False) -> np.ndarray:
    """Sum of the word's gram vectors, including its own row."""
    return table.word_vector(word, allow_oov)


def score(mp: str, c: str, table: EmbeddingTable, allow_oov: bool = False) -> float:
    """Dot product of the gram-sum of ``mp`` and the context vector of ``c``.

    With ``allow_oov`` an unknown ``mp`` falls back to its bucket grams only.
    """
    return float(table.word_vector(mp, allow_oov) @ table.context_vector(c))


def _type_vector(token: str, table: EmbeddingTable, with_flag: bool):
    if table.vocab.min_n != 1:
        raise UnsupportedConfigError("type embeddings need a table trained with min_n=1")
    b = table.vocab.token_bucket(token)
    vec = table.input[b].astype(np.float64)
    if not with_flag:
        return vec
    owners = table.vocab.bucket_owners().get(b, set())
    return vec, owners != {token}


def emb_nodetype(t: int, table: EmbeddingTable, with_flag: bool = False):
    """Unigram bucket vector of node type ``t``.

    With ``with_flag`` returns ``(vector, shared)``; ``shared`` is true when
    the bucket is also used by another gram or the token never occurred.
    """
    return _type_vector(f"n{t}", table, with_flag)


def emb_edgetype(r: int, table: EmbeddingTable, with_flag: bool = False):
    return _type_vector(f"e{r}", table, with_flag)


# --- persistence ---------------------------------------------------------------


def _fmt(v) -> str:
    return " ".join(f"{x:.8g}" for x in v)


def write_vectors(table: EmbeddingTable, path) -> None:
    """word2vec-style text file of every whole-word embedding."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table.vocab)} {table.dim}\n")
        for w in table.vocab.words:
            fh.write(f"{w} {_fmt(table.word_vector(w))}\n")


def write_bucket_vectors(table: EmbeddingTable, path) -> None:
    """Text file of the gram buckets used by the vocabulary."""
    used = sorted(set(int(b) for b in table.vocab.gram_ids if b < table.vocab.buckets))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(used)} {table.dim}\n")
        for b in used:
            fh.write(f"bucket:{b} {_fmt(table.input[b])}\n")


def read_vectors(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        rows, dim = map(int, fh.readline().split())
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            out[parts[0]] = np.array([float(x) for x in parts[1:]])
            if len(out[parts[0]]) != dim:
                raise ValueError(f"{path}: row {parts[0]!r} has wrong dimension")
    if len(out) != rows:
        raise ValueError(f"{path}: header announces {rows} rows, found {len(out)}")
    return out


def save_table(table: EmbeddingTable, path) -> None:
    """Exact binary dump (npz)."""
    with open(Path(path), "wb") as fh:
        np.savez(
            fh,
            input=table.input,
            output=table.output,
            words=np.array(table.vocab.words, dtype=str),
            counts=table.vocab.counts,
            losses=np.array(table.epoch_losses, dtype=np.float64),
            config=np.array(json.dumps(asdict(table.config), sort_keys=True)),
        )


def load_table(path) -> EmbeddingTable:
    with np.load(Path(path), allow_pickle=False) as z:
        cfg = TrainConfig(**json.loads(str(z["config"])))
        vocab = Vocabulary(z["words"].tolist(), z["counts"], cfg.min_n, cfg.max_n, cfg.buckets)
        return EmbeddingTable(
            vocab, z["input"].copy(), z["output"].copy(), cfg, z["losses"].tolist()
        )
