"""Command line front-end.

Every stage reads and writes files so a pipeline can be restarted at any
step. Exit codes: 0 success, 1 usage, 2 data/integrity, 3 resource.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import corpus as corpus_mod
from . import embedder, evalharness, features, kg, miner
from .errors import MiningBudgetError, MpEmbedError

log = logging.getLogger("mpembed")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RESOURCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _probability(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _open_fraction(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {value}")
    return value


# --- pipeline config -----------------------------------------------------------


@dataclass
class CorpusConfig:
    sentence_length: int = 8
    samples_per_pair: int = 10
    weighted: bool = True


@dataclass
class PipelineConfig:
    """Everything a full convert -> eval run needs, in one JSON file.

    Relative paths resolve against the config file's directory.
    """

    nodes: str = "nodes_t0.tsv"
    edges: str = "edges_t0.tsv"
    nodes_t1: str = "nodes_t1.tsv"
    edges_t1: str = "edges_t1.tsv"
    taxonomy: str | None = "taxonomy.tsv"
    instance_of: str | None = "instance_of"
    depth_limit: int = 3
    workdir: str = "run"
    seed: int = 0
    workers: int = 1
    mining: dict = field(default_factory=lambda: asdict(miner.MiningConfig()))
    corpus: dict = field(default_factory=lambda: asdict(CorpusConfig()))
    train: dict = field(default_factory=lambda: asdict(embedder.TrainConfig()))
    experiment: dict = field(default_factory=lambda: asdict(evalharness.ExperimentConfig()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate_sections()
        return cfg

    def validate_sections(self) -> None:
        try:
            self.mining_config()
            CorpusConfig(**self.corpus)
            self.train_config()
            self.experiment_config()
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}") from None

    def mining_config(self):
        return miner.MiningConfig(**{**self.mining, "seed": self.seed})

    def train_config(self):
        return embedder.TrainConfig(**{**self.train, "seed": self.seed, "workers": self.workers})

    def experiment_config(self):
        return evalharness.ExperimentConfig(**{**self.experiment, "seed": self.seed})

    def resolve(self, base: Path) -> dict[str, Path | None]:
        out = {}
        for name in ("nodes", "edges", "nodes_t1", "edges_t1", "taxonomy", "workdir"):
            value = getattr(self, name)
            out[name] = None if value is None else (base / value)
        return out

    def check_inputs(self, base: Path) -> None:
        paths = self.resolve(base)
        for name in ("nodes", "edges", "nodes_t1", "edges_t1", "taxonomy"):
            if paths[name] is not None and not paths[name].exists():
                raise FileNotFoundError(f"{name}: {paths[name]} does not exist")


# --- helpers -------------------------------------------------------------------


def _announce(name: str, config: dict) -> None:
    print(f"# {name} config {json.dumps(config, sort_keys=True, default=str)}", flush=True)


def _require(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"{p} does not exist")


def _corpus_file(path) -> Path:
    path = Path(path)
    return path / "corpus.txt" if path.is_dir() else path


def _table_file(path) -> Path:
    path = Path(path)
    return path / "table.npz" if path.is_dir() else path


# --- commands ------------------------------------------------------------------


def cmd_convert(args) -> int:
    _announce("convert", vars_of(args))
    _require(args.nodes, args.edges, args.taxonomy, args.schema)
    if args.dry_run:
        return EXIT_OK
    convert(args.nodes, args.edges, args.out, args.taxonomy, args.instance_of,
            args.depth_limit, args.exclude_root, args.schema)
    return EXIT_OK


def convert(nodes, edges, out, taxonomy=None, instance_of=None, depth_limit=3,
            exclude_root=False, schema=None):
    pinned = kg.read_schema(schema) if schema else None
    if taxonomy is None:
        g = kg.load_graph(nodes, edges, schema=pinned)
    else:
        if instance_of is None:
            raise UsageError("--taxonomy needs --instance-of")
        tax = kg.load_taxonomy(taxonomy)
        g = kg.load_graph(nodes, edges, schema=pinned, fill_untyped=False)
        g = kg.assign_node_types(g, tax, instance_of, depth_limit, exclude_root)
    kg.save_graph(g, out)
    log.info("converted %r -> %s", g, out)
    return g


def cmd_mine(args) -> int:
    cfg = miner.MiningConfig(
        max_length=args.max_length,
        node_skip_probability=args.node_skip,
        edge_skip_probability=args.edge_skip,
        max_paths_per_node=args.max_paths_per_node,
        min_length=args.min_length,
        seed=args.seed,
        multi_type_mode=args.multi_type,
        max_records=args.max_records,
    )
    _announce("mine", {**asdict(cfg), "workers": args.workers, "graph": str(args.graph)})
    _require(args.graph, args.start_nodes)
    if args.dry_run:
        return EXIT_OK
    g = kg.load_graph_dir(args.graph)
    starts = None
    if args.start_nodes:
        with open(args.start_nodes, encoding="utf-8") as fh:
            starts = sorted({g.node_id(line.strip()) for line in fh if line.strip()})
    mine(g, cfg, args.out, args.workers, starts)
    return EXIT_OK


def mine(g, cfg, out, workers=1, starts=None):
    deterministic = (
        cfg.node_skip_probability == 0
        and cfg.edge_skip_probability == 0
        and cfg.max_paths_per_node is None
    )
    fn = miner.mine_all if deterministic else miner.mine_probabilistic
    d = fn(g, cfg, start_nodes=starts, workers=workers)
    miner.write_dictionary(d, g, out, shards=workers)
    log.info("mined %r -> %s", d, out)
    return d


def cmd_corpus(args) -> int:
    cfg = CorpusConfig(args.sentence_length, args.samples_per_pair, not args.unweighted)
    _announce("corpus", {**asdict(cfg), "seed": args.seed})
    _require(args.graph, args.metapaths)
    if args.dry_run:
        return EXIT_OK
    g = kg.load_graph_dir(args.graph)
    d = miner.read_dictionary(args.metapaths, g)
    build_corpus(d, cfg, args.seed, args.out)
    return EXIT_OK


def build_corpus(d, cfg: CorpusConfig, seed, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sentences = corpus_mod.build_sentences(
        d, cfg.sentence_length, cfg.samples_per_pair, seed, cfg.weighted
    )
    if not sentences:
        raise MpEmbedError("no node pair has two or more meta-paths; corpus is empty")
    corpus_mod.write_corpus(sentences, out / "corpus.txt")
    corpus_mod.Vocabulary.build(sentences, buckets=1).write(out / "vocab.tsv")
    log.info("wrote %d sentences -> %s", len(sentences), out)
    return sentences


def cmd_train(args) -> int:
    cfg = embedder.TrainConfig(
        dim=args.dim, window=args.window, negatives=args.negatives, epochs=args.epochs,
        lr=args.lr, min_n=args.min_n, max_n=args.max_n, buckets=args.buckets,
        seed=args.seed, workers=args.workers, noise=args.noise,
        average_grams=args.average_grams, min_count=args.min_count,
    )
    _announce("train", asdict(cfg))
    _require(_corpus_file(args.corpus))
    if args.dry_run:
        return EXIT_OK
    sentences = corpus_mod.read_corpus(_corpus_file(args.corpus))
    train_table(sentences, cfg, args.out)
    return EXIT_OK


def train_table(sentences, cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table = embedder.train(sentences, cfg)
    embedder.save_table(table, out / "table.npz")
    embedder.write_vectors(table, out / "vectors.txt")
    embedder.write_bucket_vectors(table, out / "buckets.txt")
    log.info("trained %d words, dim %d -> %s", len(table.vocab), table.dim, out)
    return table


def cmd_features(args) -> int:
    _announce("features", {"kind": args.kind, "graph": str(args.graph), "top_k": args.top_k})
    _require(args.graph, _table_file(args.table), args.metapaths)
    if args.kind != "node-type" and args.metapaths is None:
        raise UsageError(f"--kind {args.kind} needs --metapaths")
    if args.dry_run:
        return EXIT_OK
    g = kg.load_graph_dir(args.graph)
    table = embedder.load_table(_table_file(args.table))
    d = miner.read_dictionary(args.metapaths, g) if args.metapaths else None
    write_feature_file(g, table, d, args.kind, args.out, args.top_k)
    return EXIT_OK


def write_feature_file(g, table, d, kind, out, top_k=None):
    names = g.node_names
    if kind == "edge-mp":
        rows = (
            (f"{names.name(u)},{names.name(v)}", features.edge_embedding(u, v, d, table, top_k))
            for u, v in sorted({(min(a, b), max(a, b)) for a, b, _ in g.edges})
        )
    else:
        fv = features.node_features(kind, range(g.num_nodes), table, g=g, d=d, top_k=top_k)
        rows = ((names.name(v), fv[v]) for v in range(g.num_nodes))
    features.write_features(rows, out)


def cmd_diff(args) -> int:
    _announce("diff", {"old": str(args.old), "new": str(args.new)})
    _require(args.old, args.new)
    if args.dry_run:
        return EXIT_OK
    diff = kg.diff_snapshots(kg.load_graph_dir(args.old), kg.load_graph_dir(args.new))
    kg.write_diff(diff, args.out)
    log.info("%d new edges, %d touch new nodes", len(diff), sum(diff.touches_new_node))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = evalharness.ExperimentConfig(
        features=args.features, operator=args.op, train_fraction=args.train_fraction,
        sample_fraction=args.sample_fraction, repetitions=args.repetitions, seed=args.seed,
        l2=args.l2, negative_mode=args.negatives, top_k=args.top_k, workers=args.workers,
    )
    _announce("eval", {**asdict(cfg), "tables": [str(t) for t in args.table]})
    _require(args.graph, args.diff, args.metapaths, *(_table_file(t) for t in args.table))
    if cfg.features != "node-type" and args.metapaths is None:
        raise UsageError(f"--features {cfg.features} needs --metapaths")
    if args.dry_run:
        return EXIT_OK
    g0 = kg.load_graph_dir(args.graph)
    diff = kg.read_diff(args.diff)
    d = miner.read_dictionary(args.metapaths, g0) if args.metapaths else None
    tables = [embedder.load_table(_table_file(t)) for t in args.table]
    reports = evaluate(cfg, g0, diff, tables, d, args.out, args.csv)
    for r in reports:
        print(r.table())
        print(r.kv_line())
    return EXIT_OK


def evaluate(cfg, g0, diff, tables, d, out=None, csv=None):
    reports = []
    for table in tables:
        run_cfg = evalharness.ExperimentConfig(**{**asdict(cfg), "dim": table.dim})
        report = evalharness.run_experiment(run_cfg, g0, diff, table, d)
        log.info("eval dim=%d finished in %.2fs", table.dim, report.wall_time)
        reports.append(report)
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            for r in reports:
                fh.write(r.kv_line() + "\n")
            for r in reports:
                fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    if csv:
        evalharness.write_reports_csv(reports, csv)
    return reports


def cmd_pipeline(args) -> int:
    config_path = Path(args.config)
    _require(config_path)
    cfg = PipelineConfig.from_json(config_path.read_text(encoding="utf-8"))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workdir is not None:
        cfg.workdir = str(Path(args.workdir).resolve())
    base = config_path.parent
    _announce("pipeline", asdict(cfg))
    cfg.check_inputs(base)
    if args.dry_run:
        return EXIT_OK
    run_pipeline(cfg, base)
    return EXIT_OK


def run_pipeline(cfg: PipelineConfig, base: Path):
    p = cfg.resolve(base)
    work = p["workdir"]
    work.mkdir(parents=True, exist_ok=True)
    g0 = convert(p["nodes"], p["edges"], work / "g0", p["taxonomy"], cfg.instance_of, cfg.depth_limit)
    convert(p["nodes_t1"], p["edges_t1"], work / "g1", p["taxonomy"], cfg.instance_of,
            cfg.depth_limit, schema=work / "g0" / "schema.tsv")
    g0 = kg.load_graph_dir(work / "g0")
    d = mine(g0, cfg.mining_config(), work / "metapaths", cfg.workers)
    sentences = build_corpus(d, CorpusConfig(**cfg.corpus), cfg.seed, work / "corpus")
    table = train_table(sentences, cfg.train_config(), work / "embedding")
    exp = cfg.experiment_config()
    write_feature_file(g0, table, d, "node-type", work / "features-node-type.tsv")
    write_feature_file(g0, table, d, "node-mp", work / "features-node-mp.tsv")
    diff = kg.diff_snapshots(g0, kg.load_graph_dir(work / "g1"))
    kg.write_diff(diff, work / "diff.tsv")
    reports = evaluate(exp, g0, kg.read_diff(work / "diff.tsv"), [table], d, work / "report.txt")
    for r in reports:
        print(r.table())
        print(r.kv_line())
    return reports


def cmd_init_config(args) -> int:
    Path(args.out).write_text(PipelineConfig().to_json(), encoding="utf-8")
    return EXIT_OK


def vars_of(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "func"}


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpembed", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True, workers=False):
        p.add_argument("--dry-run", action="store_true", help="validate inputs, compute nothing")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
        if workers:
            p.add_argument("--workers", type=_positive_int, default=1, help="worker count (default 1)")

    p = sub.add_parser("convert", help="normalize a graph and assign taxonomy types")
    p.add_argument("--nodes", type=Path, required=True, help="nodes TSV")
    p.add_argument("--edges", type=Path, required=True, help="edges TSV")
    p.add_argument("--taxonomy", type=Path, help="taxonomy TSV (child<TAB>parent)")
    p.add_argument("--instance-of", help="edge type linking instances to classes")
    p.add_argument("--depth-limit", type=_positive_int, default=3, help="taxonomy levels kept (default 3)")
    p.add_argument("--exclude-root", action="store_true", help="drop root classes from labels")
    p.add_argument("--schema", type=Path, help="schema.tsv pinning type ids")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    common(p, seed=False)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("mine", help="mine meta-paths between node pairs")
    p.add_argument("--graph", type=Path, required=True, help="converted graph directory")
    p.add_argument("--max-length", type=_positive_int, default=3, help="max node positions (default 3)")
    p.add_argument("--min-length", type=_positive_int, default=1, help="min node positions stored (default 1)")
    p.add_argument("--node-skip", type=_probability, default=0.0, help="start-node skip probability")
    p.add_argument("--edge-skip", type=_probability, default=0.0, help="edge skip probability")
    p.add_argument("--max-paths-per-node", type=_positive_int, help="stop a start node after this many records")
    p.add_argument("--multi-type", choices=miner.MULTI_TYPE_MODES, default="first-type",
                   help="how multi-typed nodes enter meta-paths")
    p.add_argument("--max-records", type=_positive_int, help="abort beyond this many records")
    p.add_argument("--start-nodes", type=Path, help="file of node names to start from")
    p.add_argument("--out", type=Path, required=True, help="output directory for metapaths-<i>.tsv")
    common(p, workers=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("corpus", help="sample sentences from mined meta-paths")
    p.add_argument("--graph", type=Path, required=True, help="converted graph directory")
    p.add_argument("--metapaths", type=Path, required=True, help="mined dictionary directory")
    p.add_argument("--sentence-length", type=int, default=8, help="meta-paths per sentence (default 8)")
    p.add_argument("--samples-per-pair", type=_positive_int, default=10, help="sentences per pair (default 10)")
    p.add_argument("--unweighted", action="store_true", help="ignore discovery counts when sampling")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train", help="train meta-path embeddings")
    p.add_argument("--corpus", type=Path, required=True, help="corpus directory or file")
    p.add_argument("--dim", type=_positive_int, default=64, help="embedding dimension (default 64)")
    p.add_argument("--window", type=_positive_int, default=5, help="context window (default 5)")
    p.add_argument("--negatives", type=_positive_int, default=5, help="negatives per positive (default 5)")
    p.add_argument("--epochs", type=int, default=5, help="passes over the corpus (default 5)")
    p.add_argument("--lr", type=float, default=0.025, help="initial learning rate (default 0.025)")
    p.add_argument("--min-n", type=_positive_int, default=1, help="shortest token n-gram (default 1)")
    p.add_argument("--max-n", type=_positive_int, default=3, help="longest token n-gram (default 3)")
    p.add_argument("--buckets", type=_positive_int, default=corpus_mod.DEFAULT_BUCKETS, help="hash buckets")
    p.add_argument("--noise", choices=embedder.NOISE_MODES, default="unigram", help="negative sampling law")
    p.add_argument("--average-grams", action="store_true", help="average instead of sum gram vectors")
    p.add_argument("--min-count", type=_positive_int, default=1, help="vocabulary frequency threshold")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    common(p, workers=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("features", help="dump node or edge feature vectors")
    p.add_argument("--graph", type=Path, required=True, help="converted graph directory")
    p.add_argument("--table", type=Path, required=True, help="embedding directory or table.npz")
    p.add_argument("--metapaths", type=Path, help="mined dictionary directory")
    p.add_argument("--kind", choices=evalharness.FEATURE_MODES, default="node-type", help="feature family")
    p.add_argument("--top-k", type=_positive_int, help="average only the k most frequent meta-paths")
    p.add_argument("--out", type=Path, required=True, help="output TSV")
    common(p, seed=False)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("diff", help="new edges between two converted snapshots")
    p.add_argument("--old", type=Path, required=True, help="earlier graph directory")
    p.add_argument("--new", type=Path, required=True, help="later graph directory")
    p.add_argument("--out", type=Path, required=True, help="output TSV")
    common(p, seed=False)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("eval", help="temporal link prediction experiment")
    p.add_argument("--graph", type=Path, required=True, help="earlier (t0) graph directory")
    p.add_argument("--diff", type=Path, required=True, help="diff TSV")
    p.add_argument("--table", type=Path, action="append", required=True,
                   help="embedding directory; repeat for a dimension sweep")
    p.add_argument("--metapaths", type=Path, help="mined dictionary on t0")
    p.add_argument("--features", choices=evalharness.FEATURE_MODES, default="node-type", help="feature family")
    p.add_argument("--op", choices=features.OPERATORS, default="average", help="pair operator")
    p.add_argument("--train-fraction", type=_open_fraction, default=0.5, help="share used for training")
    p.add_argument("--sample-fraction", type=float, default=1.0, help="share of new edges used at all")
    p.add_argument("--repetitions", type=_positive_int, default=10, help="repetitions (default 10)")
    p.add_argument("--l2", type=float, default=1e-4, help="regularization strength")
    p.add_argument("--negatives", choices=("uniform", "degree"), default="uniform", help="negative pair law")
    p.add_argument("--top-k", type=_positive_int, help="average only the k most frequent meta-paths")
    p.add_argument("--out", type=Path, help="report file")
    p.add_argument("--csv", type=Path, help="sweep CSV")
    common(p, workers=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run convert..eval from a JSON config")
    p.add_argument("--config", type=Path, required=True, help="pipeline JSON")
    p.add_argument("--workdir", type=Path, help="override the output directory")
    p.add_argument("--dry-run", action="store_true", help="validate inputs, compute nothing")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("init-config", help="write a default pipeline config")
    p.add_argument("--out", type=Path, required=True, help="JSON file to write")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    start = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"mpembed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError) as exc:
        print(f"mpembed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MiningBudgetError as exc:
        print(f"mpembed: resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except MemoryError:
        print("mpembed: resource error: out of memory", file=sys.stderr)
        return EXIT_RESOURCE
    except (MpEmbedError, FileNotFoundError, KeyError) as exc:
        print(f"mpembed: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    log.info("%s done in %.2fs", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
