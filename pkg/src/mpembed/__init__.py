"""Meta-path mining, meta-path embeddings and temporal link prediction."""

from .corpus import Vocabulary, build_sentences, extract_ngrams
from .embedder import EmbeddingTable, TrainConfig, emb_edgetype, emb_nodetype, emb_word, score, train
from .evalharness import ExperimentConfig, Report, build_labeled_set, macro_f1, run_experiment, train_logreg
from .features import FeatureVector, combine_pair, edge_embedding, node_embedding_mp, node_embedding_types
from .kg import (
    KnowledgeGraph,
    SnapshotDiff,
    Taxonomy,
    assign_node_types,
    diff_snapshots,
    load_graph,
    reduce_taxonomy,
)
from .metapath import parse as parse_metapath
from .metapath import serialize as serialize_metapath
from .miner import MetaPathDictionary, MiningConfig, expand_multi_type, mine_all, mine_probabilistic

__version__ = "0.1.0"
