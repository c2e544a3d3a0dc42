"""Temporal link prediction: label new edges, featurize from t0, fit, score."""

from __future__ import annotations

import logging
import math
import statistics
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .embedder import EmbeddingTable
from .errors import DegenerateDataError, EmptyExperimentError, SamplingError
from .features import MULTIPLICATIVE, OPERATORS, combine_pair, edge_embedding, node_features
from .kg import KnowledgeGraph, SnapshotDiff
from .miner import MetaPathDictionary

log = logging.getLogger(__name__)

FEATURE_MODES = ("node-type", "node-mp", "edge-mp")


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class LabeledEdgeSet:
    """Balanced positive/negative node pairs, as g0 node ids."""

    positives: np.ndarray
    negatives: np.ndarray
    seed: int

    def split(self, train_fraction: float, seed: int):
        """Stratified split; returns ``(train_pairs, train_y, test_pairs, test_y)``."""
        rng = np.random.default_rng([seed, 1])
        parts = {True: ([], []), False: ([], [])}
        for label, pairs in ((1, self.positives), (0, self.negatives)):
            order = rng.permutation(len(pairs))
            n_train = min(max(1, int(round(train_fraction * len(pairs)))), len(pairs) - 1)
            for is_train, idx in ((True, order[:n_train]), (False, order[n_train:])):
                parts[is_train][0].append(pairs[np.sort(idx)])
                parts[is_train][1].append(np.full(len(idx), label))
        tr, te = parts[True], parts[False]
        return (
            np.concatenate(tr[0]), np.concatenate(tr[1]),
            np.concatenate(te[0]), np.concatenate(te[1]),
        )


def eligible_positive_pairs(diff: SnapshotDiff, g0: KnowledgeGraph) -> list[tuple[int, int]]:
    """New edges between t0 nodes, as unordered id pairs, first occurrence order."""
    seen = set()
    out = []
    for src, dst, _ in diff.eligible_edges():
        u, v = g0.node_names.get(src), g0.node_names.get(dst)
        if u is None or v is None or u == v or g0.connected(u, v):
            continue
        key = (min(u, v), max(u, v))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def build_labeled_set(
    diff: SnapshotDiff,
    g0: KnowledgeGraph,
    ratio: float = 1.0,
    seed: int = 0,
    negative_mode: str = "uniform",
) -> LabeledEdgeSet:
    """Positives are new t0-only edges; negatives are sampled non-edges, 1:1.

    ``ratio`` is the fraction of eligible new edges kept as positives.
    Negatives avoid every pair joined in t0 or t1.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    rng = np.random.default_rng([seed, 0])
    pos = eligible_positive_pairs(diff, g0)
    if not pos:
        raise EmptyExperimentError("no new edge has both endpoints in the earlier snapshot")
    if ratio < 1:
        keep = max(1, int(round(ratio * len(pos))))
        pos = [pos[i] for i in np.sort(rng.choice(len(pos), keep, replace=False))]

    forbidden = set(pos)
    for src, dst, _ in diff.new_edges:
        u, v = g0.node_names.get(src), g0.node_names.get(dst)
        if u is not None and v is not None:
            forbidden.add((min(u, v), max(u, v)))

    n = g0.num_nodes
    if negative_mode == "uniform":
        p = None
    elif negative_mode == "degree":
        deg = np.array([g0.degree(v) + 1 for v in range(n)], dtype=float)
        p = deg / deg.sum()
    else:
        raise ValueError("negative_mode must be 'uniform' or 'degree'")

    need = len(pos)
    neg: list[tuple[int, int]] = []
    chosen = set()
    attempts = 0
    limit = 1000 * need
    while len(neg) < need:
        if attempts >= limit:
            raise SamplingError(
                f"rejection rate above 99.9% while sampling negatives ({len(neg)}/{need} found)"
            )
        batch = max(64, 2 * (need - len(neg)))
        us = rng.choice(n, batch, p=p)
        vs = rng.choice(n, batch, p=p)
        for u, v in zip(us.tolist(), vs.tolist()):
            attempts += 1
            key = (min(u, v), max(u, v))
            if u == v or key in chosen or key in forbidden or g0.connected(u, v):
                continue
            chosen.add(key)
            neg.append(key)
            if len(neg) == need:
                break
    return LabeledEdgeSet(np.array(pos, dtype=np.int64), np.array(neg, dtype=np.int64), seed)


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    converged: bool
    n_iter: int
    grad_norm: float

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)


def _objective(X, y, w, b, l2):
    z = X @ w + b
    # mean log(1 + exp(-y' z)) with y' in {-1, +1}
    m = np.where(y == 1, z, -z)
    loss = np.mean(np.logaddexp(0.0, -m)) + 0.5 * l2 * (w @ w)
    s = expit(z)
    r = (s - y) / len(y)
    return loss, X.T @ r + l2 * w, r.sum()


def train_logreg(
    X, y, l2: float = 1e-4, tol: float = 1e-6, max_iter: int = 1000, warn: bool = True
) -> LogisticModel:
    """L2-regularized logistic regression by accelerated gradient descent.

    Step size is the inverse Lipschitz bound of the gradient. Stops when the
    gradient norm drops below ``tol``; otherwise warns and returns the best
    iterate seen.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or Inf")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ValueError("labels must be 0/1")
    if (y == 1).sum() < 2 or (y == 0).sum() < 2:
        raise DegenerateDataError("need at least two examples of each class")

    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    lipschitz = 0.25 * np.linalg.norm(Xb, 2) ** 2 / n + l2
    step = 1.0 / lipschitz

    w = np.zeros(d)
    b = 0.0
    w_prev, b_prev = w.copy(), b
    t = 1.0
    best = (math.inf, w.copy(), b, math.inf)
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
        mom = (t - 1) / t_next
        yw = w + mom * (w - w_prev)
        yb = b + mom * (b - b_prev)
        _, gw, gb = _objective(X, y, yw, yb, l2)
        w_prev, b_prev = w, b
        w = yw - step * gw
        b = yb - step * gb
        loss, gw_new, gb_new = _objective(X, y, w, b, l2)
        gnorm = math.sqrt(gw_new @ gw_new + gb_new * gb_new)
        if loss < best[0]:
            best = (loss, w.copy(), b, gnorm)
        if gnorm < tol:
            return LogisticModel(w, float(b), True, it, gnorm)
        # adaptive restart when the momentum stops helping
        if gw @ (w - w_prev) + gb * (b - b_prev) > 0:
            t = 1.0
        else:
            t = t_next
    msg = (
        f"logistic regression did not reach gradient norm {tol} in {max_iter} iterations "
        f"(final {gnorm:.2e})"
    )
    if warn:
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    else:
        log.info(msg)
    return LogisticModel(best[1], float(best[2]), False, it, best[3])


def macro_f1(predictions, labels) -> float:
    """Unweighted mean of the F1 scores of classes 1 and 0."""
    p = np.asarray(predictions).astype(int)
    t = np.asarray(labels).astype(int)
    if len(p) != len(t):
        raise ValueError("predictions and labels differ in length")
    if len(p) == 0:
        raise ValueError("empty input")
    scores = []
    for c in (1, 0):
        tp = np.sum((p == c) & (t == c))
        fp = np.sum((p == c) & (t != c))
        fn = np.sum((p != c) & (t == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass
class ExperimentConfig:
    features: str = "node-type"
    operator: str = "average"
    dim: int | None = None
    train_fraction: float = 0.5
    sample_fraction: float = 1.0
    repetitions: int = 10
    seed: int = 0
    l2: float = 1e-4
    negative_mode: str = "uniform"
    top_k: int | None = None
    standardize: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.features not in FEATURE_MODES:
            raise ValueError(f"features must be one of {FEATURE_MODES}")
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0 < self.sample_fraction <= 1:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class Report:
    scores: list[float]
    config: ExperimentConfig
    effective_operator: str
    downgraded: bool = False
    n_train: int = 0
    n_test: int = 0
    empty_vectors: int = 0
    wall_time: float = field(default=0.0, compare=False)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.scores)

    @property
    def std(self) -> float:
        return statistics.pstdev(self.scores) if len(self.scores) > 1 else 0.0

    def kv_line(self) -> str:
        op = self.effective_operator if self.config.features != "edge-mp" else "none"
        return (
            f"metric=macro_f1 mean={self.mean:.6f} std={self.std:.6f} dim={self.config.dim} "
            f"op={op} features={self.config.features} reps={len(self.scores)} "
            f"train_fraction={self.config.train_fraction} downgraded={int(self.downgraded)}"
        )

    def table(self) -> str:
        lines = [
            f"{'features':<12}{'op':<13}{'dim':>6}{'reps':>6}{'mean F1':>10}{'std':>9}",
            f"{self.config.features:<12}{self.effective_operator:<13}{str(self.config.dim):>6}"
            f"{len(self.scores):>6}{self.mean:>10.4f}{self.std:>9.4f}",
        ]
        lines += [f"  rep {i}: {s:.4f}" for i, s in enumerate(self.scores)]
        return "\n".join(lines)

    def csv_row(self) -> dict:
        return {
            "features": self.config.features,
            "operator": self.effective_operator,
            "dim": self.config.dim,
            "train_fraction": self.config.train_fraction,
            "sample_fraction": self.config.sample_fraction,
            "mean": self.mean,
            "std": self.std,
            "reps": len(self.scores),
        }

    def to_dict(self) -> dict:
        return {
            "scores": self.scores,
            "mean": self.mean,
            "std": self.std,
            "effective_operator": self.effective_operator,
            "downgraded": self.downgraded,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "empty_vectors": self.empty_vectors,
            "config": asdict(self.config),
        }


def parse_kv_line(line: str) -> dict[str, str]:
    return dict(tok.split("=", 1) for tok in line.split())


def _standardize(train, test):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0] = 1.0
    return (train - mu) / sd, (test - mu) / sd


def run_experiment(
    cfg: ExperimentConfig,
    g0: KnowledgeGraph,
    diff: SnapshotDiff,
    table: EmbeddingTable,
    d: MetaPathDictionary | None = None,
) -> Report:
    """Repeat split -> featurize -> fit -> score and average macro F1.

    Every feature is computed from t0 inputs only. When a multiplicative
    operator meets a zero-vector fallback anywhere in the experiment, the
    operator is replaced by ``average`` for all repetitions.
    """
    start = time.perf_counter()
    if cfg.dim is not None and cfg.dim != table.dim:
        raise ValueError(f"config dim {cfg.dim} differs from table dim {table.dim}")
    if cfg.dim is None:
        cfg = ExperimentConfig(**{**asdict(cfg), "dim": table.dim})
    if cfg.features != "node-type" and d is None:
        raise ValueError(f"{cfg.features} features need a meta-path dictionary")

    seeds = [cfg.seed + r for r in range(cfg.repetitions)]
    sets = [build_labeled_set(diff, g0, cfg.sample_fraction, s, cfg.negative_mode) for s in seeds]

    op = cfg.operator
    downgraded = False
    n_empty = 0
    if cfg.features == "edge-mp":
        pairs = sorted({tuple(p) for ls in sets for p in np.vstack([ls.positives, ls.negatives]).tolist()})
        cache = {p: edge_embedding(p[0], p[1], d, table, cfg.top_k) for p in pairs}
        n_empty = sum(fv.empty for fv in cache.values())

        def featurize(pair_arr):
            return np.array([cache[(u, v)].vector for u, v in pair_arr.tolist()])
    else:
        nodes = sorted({v for ls in sets for v in np.concatenate([ls.positives, ls.negatives]).ravel().tolist()})
        cache = node_features(cfg.features, nodes, table, g=g0, d=d, top_k=cfg.top_k)
        n_empty = sum(fv.empty for fv in cache.values())
        if n_empty and op in MULTIPLICATIVE:
            log.warning(
                "%d node vector(s) are zero fallbacks; operator %s replaced by average", n_empty, op
            )
            op = "average"
            downgraded = True

        def featurize(pair_arr):
            return np.array(
                [combine_pair(cache[u], cache[v], op).vector for u, v in pair_arr.tolist()]
            )

    def one_rep(k):
        tr_pairs, tr_y, te_pairs, te_y = sets[k].split(cfg.train_fraction, seeds[k])
        X_tr, X_te = featurize(tr_pairs), featurize(te_pairs)
        if cfg.standardize:
            X_tr, X_te = _standardize(X_tr, X_te)
        model = train_logreg(X_tr, tr_y, l2=cfg.l2, warn=False)
        return macro_f1(model.predict(X_te), te_y), len(tr_y), len(te_y)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one_rep, range(cfg.repetitions)))
    else:
        results = [one_rep(k) for k in range(cfg.repetitions)]
    return Report(
        scores=[r[0] for r in results],
        config=cfg,
        effective_operator=op,
        downgraded=downgraded,
        n_train=results[0][1],
        n_test=results[0][2],
        empty_vectors=n_empty,
        wall_time=time.perf_counter() - start,
    )


def write_reports_csv(reports, path) -> None:
    import csv

    rows = [r.csv_row() for r in reports]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
