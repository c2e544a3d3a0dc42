import json
import shutil
import subprocess
import sys

import pytest

from conftest import FIXTURE_DIR
from mpembed import kg
from mpembed.cli import PipelineConfig, build_parser, main
from mpembed.evalharness import parse_kv_line
from mpembed.miner import MiningConfig, mine_all, read_dictionary

SUBCOMMANDS = ["convert", "mine", "corpus", "train", "features", "diff", "eval", "pipeline", "init-config"]


@pytest.fixture
def chain(write):
    """Taxonomy root > a > b > c with one instance of c."""
    tax = write("tax.tsv", "a\troot\nb\ta\nc\tb\n")
    nodes = write("nodes.tsv", "root\na\nb\nc\nx\ny\n")
    edges = write(
        "edges.tsv",
        "a\troot\tsubclass_of\nb\ta\tsubclass_of\nc\tb\tsubclass_of\nx\tc\tinstance_of\nx\ty\tknows\n",
    )
    return tax, nodes, edges


@pytest.fixture
def graph_dir(tmp_path):
    out = tmp_path / "g0"
    assert main(["convert", "--nodes", str(FIXTURE_DIR / "nodes_t0.tsv"), "--edges",
                 str(FIXTURE_DIR / "edges_t0.tsv"), "--taxonomy", str(FIXTURE_DIR / "taxonomy.tsv"),
                 "--instance-of", "instance_of", "--out", str(out)]) == 0
    return out


# --- usage errors ------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ["mine", "--graph", ".", "--out", "o", "--max-length", "0"],
        ["train", "--corpus", ".", "--out", "o", "--dim", "0"],
        ["mine", "--graph", ".", "--out", "o", "--bogus"],
        ["mine", "--graph", ".", "--out", "o", "--edge-skip", "1.5"],
        ["eval", "--graph", ".", "--diff", "d", "--table", "t", "--train-fraction", "1"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_help_documents_flags(name, capsys):
    with pytest.raises(SystemExit) as exc:
        main([name, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[name]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.option_strings and action.dest != "help":
            assert action.help


def test_missing_input_is_data_error(tmp_path):
    assert main(["diff", "--old", str(tmp_path / "no"), "--new", str(tmp_path / "no"),
                 "--out", str(tmp_path / "d.tsv")]) == 2


# --- convert -------------------------------------------------------------------------


def test_convert_depth_limit_on_chain(chain, tmp_path):
    tax, nodes, edges = chain
    out = tmp_path / "g"
    assert main(["convert", "--nodes", str(nodes), "--edges", str(edges), "--taxonomy", str(tax),
                 "--instance-of", "instance_of", "--depth-limit", "3", "--out", str(out)]) == 0
    g = kg.load_graph_dir(out)
    names = {g.type_names.name(t) for t in g.node_types[g.node_id("x")]}
    assert names == {"root", "a", "b"}


def test_convert_without_taxonomy_passes_types_through(write, tmp_path):
    nodes = write("n.tsv", "u\tA,B\nv\tC\n")
    edges = write("e.tsv", "u\tv\tr\n")
    out = tmp_path / "g"
    assert main(["convert", "--nodes", str(nodes), "--edges", str(edges), "--out", str(out)]) == 0
    assert (out / "nodes.tsv").read_text() == "u\tA,B\nv\tC\n"


def test_convert_unknown_instance_of(chain, tmp_path):
    tax, nodes, edges = chain
    code = main(["convert", "--nodes", str(nodes), "--edges", str(edges), "--taxonomy", str(tax),
                 "--instance-of", "type_of", "--out", str(tmp_path / "g")])
    assert code == 2


# --- mine ----------------------------------------------------------------------------


def test_mine_zero_skip_equals_mine_all(graph_dir, tmp_path):
    out = tmp_path / "mp"
    assert main(["mine", "--graph", str(graph_dir), "--max-length", "3", "--node-skip", "0",
                 "--edge-skip", "0", "--out", str(out)]) == 0
    g = kg.load_graph_dir(graph_dir)
    assert read_dictionary(out, g) == mine_all(g, MiningConfig(max_length=3))


def test_mine_workers_match(graph_dir, tmp_path):
    args = ["mine", "--graph", str(graph_dir), "--max-length", "3", "--edge-skip", "0.3", "--seed", "4"]
    assert main(args + ["--workers", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--workers", "4", "--out", str(tmp_path / "b")]) == 0
    g = kg.load_graph_dir(graph_dir)
    assert read_dictionary(tmp_path / "a", g) == read_dictionary(tmp_path / "b", g)


def test_mine_budget_is_resource_error(graph_dir, tmp_path):
    code = main(["mine", "--graph", str(graph_dir), "--max-length", "4", "--max-records", "3",
                 "--out", str(tmp_path / "mp")])
    assert code == 3


def test_dry_run_prints_config_and_writes_nothing(graph_dir, tmp_path, capsys):
    out = tmp_path / "mp"
    assert main(["mine", "--graph", str(graph_dir), "--seed", "9", "--dry-run", "--out", str(out)]) == 0
    line = capsys.readouterr().out.splitlines()[0]
    assert line.startswith("# mine config ")
    assert json.loads(line[len("# mine config "):])["seed"] == 9
    assert not out.exists()


# --- staged pipeline -------------------------------------------------------------------


def _stage(tmp_path, graph_dir):
    assert main(["mine", "--graph", str(graph_dir), "--max-length", "3", "--out", str(tmp_path / "mp")]) == 0
    assert main(["corpus", "--graph", str(graph_dir), "--metapaths", str(tmp_path / "mp"),
                 "--sentence-length", "4", "--samples-per-pair", "3", "--out", str(tmp_path / "c")]) == 0
    assert main(["train", "--corpus", str(tmp_path / "c"), "--dim", "8", "--epochs", "2",
                 "--buckets", "1024", "--out", str(tmp_path / "emb")]) == 0
    g1 = tmp_path / "g1"
    assert main(["convert", "--nodes", str(FIXTURE_DIR / "nodes_t1.tsv"), "--edges",
                 str(FIXTURE_DIR / "edges_t1.tsv"), "--taxonomy", str(FIXTURE_DIR / "taxonomy.tsv"),
                 "--instance-of", "instance_of", "--schema", str(graph_dir / "schema.tsv"),
                 "--out", str(g1)]) == 0
    assert main(["diff", "--old", str(graph_dir), "--new", str(g1), "--out", str(tmp_path / "diff.tsv")]) == 0


def test_staged_commands(graph_dir, tmp_path, capsys):
    _stage(tmp_path, graph_dir)
    for kind in ("node-type", "node-mp", "edge-mp"):
        out = tmp_path / f"f-{kind}.tsv"
        assert main(["features", "--graph", str(graph_dir), "--table", str(tmp_path / "emb"),
                     "--metapaths", str(tmp_path / "mp"), "--kind", kind, "--out", str(out)]) == 0
        first = out.read_text().splitlines()[0].split("\t")
        assert len(first[1].split(" ")) == 8
    capsys.readouterr()
    assert main(["eval", "--graph", str(graph_dir), "--diff", str(tmp_path / "diff.tsv"),
                 "--table", str(tmp_path / "emb"), "--repetitions", "3",
                 "--out", str(tmp_path / "report.txt")]) == 0
    kv = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("metric=")]
    assert parse_kv_line(kv[0])["reps"] == "3"


def test_eval_hadamard_downgrade(graph_dir, tmp_path, caplog):
    _stage(tmp_path, graph_dir)
    # keep only half the dictionary so some nodes have no meta-paths
    g = kg.load_graph_dir(graph_dir)
    d = read_dictionary(tmp_path / "mp", g)
    from mpembed.miner import write_dictionary

    holed = d.restricted(lambda u, v: u % 2 == 0 and v % 2 == 0)
    shutil.rmtree(tmp_path / "mp")
    write_dictionary(holed, g, tmp_path / "mp")
    assert main(["eval", "--graph", str(graph_dir), "--diff", str(tmp_path / "diff.tsv"),
                 "--table", str(tmp_path / "emb"), "--metapaths", str(tmp_path / "mp"),
                 "--features", "node-mp", "--op", "hadamard", "--repetitions", "2",
                 "--out", str(tmp_path / "r.txt")]) == 0
    kv = parse_kv_line((tmp_path / "r.txt").read_text().splitlines()[0])
    assert kv["op"] == "average" and kv["downgraded"] == "1"
    assert "replaced by average" in caplog.text


def test_eval_needs_metapaths_for_mp_features(graph_dir, tmp_path):
    _stage(tmp_path, graph_dir)
    code = main(["eval", "--graph", str(graph_dir), "--diff", str(tmp_path / "diff.tsv"),
                 "--table", str(tmp_path / "emb"), "--features", "edge-mp"])
    assert code == 1


# --- config ------------------------------------------------------------------------------


def test_config_roundtrip(tmp_path):
    assert main(["init-config", "--out", str(tmp_path / "p.json")]) == 0
    text = (tmp_path / "p.json").read_text()
    cfg = PipelineConfig.from_json(text)
    assert cfg.to_json() == text
    fixture = PipelineConfig.from_json((FIXTURE_DIR / "pipeline.json").read_text())
    assert PipelineConfig.from_json(fixture.to_json()) == fixture


def test_config_rejects_bad_values(tmp_path):
    bad = json.loads(PipelineConfig().to_json())
    bad["mining"]["max_length"] = 0
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["pipeline", "--config", str(tmp_path / "bad.json"), "--dry-run"]) == 1
    bad = json.loads(PipelineConfig().to_json())
    bad["colour"] = "red"
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["pipeline", "--config", str(tmp_path / "bad.json"), "--dry-run"]) == 1


def test_pipeline_dry_run_checks_paths(tmp_path):
    cfg = json.loads((FIXTURE_DIR / "pipeline.json").read_text())
    cfg["nodes"] = "missing.tsv"
    shutil.copytree(FIXTURE_DIR, tmp_path / "fx")
    (tmp_path / "fx" / "pipeline.json").write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(tmp_path / "fx" / "pipeline.json"), "--dry-run"]) == 2
    assert main(["pipeline", "--config", str(FIXTURE_DIR / "pipeline.json"), "--dry-run",
                 "--workdir", str(tmp_path / "w")]) == 0
    assert not (tmp_path / "w").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mpembed.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "pipeline" in res.stdout
