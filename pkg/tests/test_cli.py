import numpy as np
import pytest

from marsbn import cli
from marsbn.dataset import load_csv
from marsbn.graph import is_acyclic, read_edges
from marsbn.scoring import read_score_file

FAST = ["--trees", "10", "--threads", "1"]


@pytest.fixture
def gen_dir(tmp_path):
    assert cli.main(["gen", "--nodes", "5", "--samples", "300", "--kind", "hinge", "--seed", "7",
                     "--out-dir", str(tmp_path)]) == 0
    return tmp_path


def test_gen_outputs(tmp_path, capsys):
    assert cli.main(["gen", "--nodes", "10", "--samples", "1000", "--kind", "hinge", "--seed", "7",
                     "--out-dir", str(tmp_path)]) == 0
    d = load_csv(tmp_path / "data.csv")
    assert d.N == 1000 and d.n == 10
    g, names = read_edges(tmp_path / "truth.edges", d.names)
    assert is_acyclic(g.parents)
    assert "1000 rows" in capsys.readouterr().out


def test_gen_is_deterministic(tmp_path):
    for sub in ("a", "b"):
        cli.main(["gen", "--nodes", "6", "--samples", "50", "--seed", "3", "--out-dir", str(tmp_path / sub)])
    for f in ("data.csv", "data.csv.schema", "truth.edges"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_gen_kinds(tmp_path):
    cli.main(["gen", "--nodes", "4", "--samples", "40", "--kind", "discrete", "--out-dir", str(tmp_path)])
    assert all(m.is_categorical for m in load_csv(tmp_path / "data.csv").metas)


def test_gen_zero_nodes_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["gen", "--nodes", "0", "--out-dir", str(tmp_path)])
    assert exc.value.code == 2
    assert "--nodes" in capsys.readouterr().err


def test_rank_table(gen_dir):
    out = gen_dir / "rank.tsv"
    assert cli.main(["rank", "--data", str(gen_dir / "data.csv"), "--target", "V1", "--out", str(out)] + FAST) == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "target\tcandidate\timportance\trank"
    rows = [ln.split("\t") for ln in lines[1:]]
    assert len(rows) == 4
    assert [r[3] for r in rows] == ["1", "2", "3", "4"]
    assert all(r[0] == "V1" and r[1] != "V1" for r in rows)
    imps = [float(r[2]) for r in rows]
    assert imps == sorted(imps, reverse=True)


def test_score_learn_eval_chain(gen_dir, capsys):
    data = str(gen_dir / "data.csv")
    scores = gen_dir / "scores.txt"
    dump = gen_dir / "models.txt"
    assert cli.main(["score", "--data", data, "--lambda", "2", "--out", str(scores),
                     "--dump-models", str(dump)] + FAST) == 0
    cache = read_score_file(scores)
    assert cache.n == 5 and all(len(r) == 4 for r in cache.records)
    assert dump.read_text().count("# V") == 5

    learned = gen_dir / "learned.edges"
    capsys.readouterr()
    assert cli.main(["learn", "--scores", str(scores), "--data", data, "--out", str(learned)]) == 0
    out = capsys.readouterr().out
    assert "method\texact" in out and "total\t" in out
    assert cli.main(["learn", "--scores", str(scores), "--heuristic", "--out", str(gen_dir / "h.edges")]) == 0
    assert "heuristic" in capsys.readouterr().out

    assert cli.main(["eval", "--learned", str(learned), "--truth", str(gen_dir / "truth.edges"),
                     "--format", "kv"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("TP: ") and "F1: " in out


def test_learn_detects_dataset_mismatch(gen_dir, tmp_path, capsys):
    scores = gen_dir / "scores.txt"
    cli.main(["score", "--data", str(gen_dir / "data.csv"), "--lambda", "1", "--out", str(scores)] + FAST)
    other = tmp_path / "other"
    cli.main(["gen", "--nodes", "5", "--samples", "300", "--seed", "8", "--out-dir", str(other)])
    capsys.readouterr()
    rc = cli.main(["learn", "--scores", str(scores), "--data", str(other / "data.csv"),
                   "--out", str(tmp_path / "x.edges")])
    assert rc == 1
    assert "different dataset" in capsys.readouterr().err


def test_eval_name_mismatch(tmp_path, capsys):
    (tmp_path / "a.edges").write_text("x y\nz\n")
    (tmp_path / "b.edges").write_text("x y\nw\n")
    rc = cli.main(["eval", "--learned", str(tmp_path / "a.edges"), "--truth", str(tmp_path / "b.edges")])
    assert rc == 1
    assert "node names differ" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path, capsys):
    assert cli.main(["rank", "--data", str(tmp_path / "nope.csv")]) == 2
    assert cli.main(["learn", "--scores", str(tmp_path / "nope.txt")]) == 2


def test_malformed_score_file_is_validation_error(tmp_path, capsys):
    bad = tmp_path / "s.txt"
    bad.write_text("1\na 2\n-1.0 0\n")
    assert cli.main(["learn", "--scores", str(bad)]) == 1
    assert "s.txt:" in capsys.readouterr().err


def test_lambda_too_large(gen_dir, capsys):
    rc = cli.main(["score", "--data", str(gen_dir / "data.csv"), "--lambda", "5",
                   "--out", str(gen_dir / "s.txt")] + FAST)
    assert rc == 1
    assert "lambda" in capsys.readouterr().err


def test_run_prints_report(gen_dir, capsys):
    out_dir = gen_dir / "run"
    capsys.readouterr()
    rc = cli.main(["run", "--data", str(gen_dir / "data.csv"), "--truth", str(gen_dir / "truth.edges"),
                   "--lambda", "2", "--time-limit", "60", "--out-dir", str(out_dir)] + FAST)
    assert rc == 0
    out = capsys.readouterr().out
    header, values = out.strip().split("\n")
    assert header.startswith("TP\tFP\tFN\tWD\tSHD")
    assert (out_dir / "report.txt").read_text() == out
    for f in ("scores.txt", "learned.edges", "learn.txt"):
        assert (out_dir / f).exists()


def test_config_file_and_flag_precedence(gen_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nlambda = 1\ntrees = 5\nheuristic = true\n")
    args = cli.parse_args(["run", "--data", "d.csv", "--config", str(cfg)])
    assert args.lam == 1 and args.trees == 5 and args.heuristic is True
    args = cli.parse_args(["run", "--data", "d.csv", "--config", str(cfg), "--lambda", "3"])
    assert args.lam == 3
    cfg.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="bogus"):
        cli.parse_args(["run", "--data", "d.csv", "--config", str(cfg)])


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.parse_args(["eval", "--learned", "a", "--truth", "b"]).threads == 3
    assert cli.parse_args(["eval", "--learned", "a", "--truth", "b", "--threads", "2"]).threads == 2
    monkeypatch.delenv(cli.THREADS_ENV)
    assert cli.parse_args(["eval", "--learned", "a", "--truth", "b"]).threads >= 1


def test_stage_seeds_are_distinct_and_stable():
    seeds = {s: cli.stage_seed(5, s) for s in ("network", "sample", "forest", "search")}
    assert len(set(seeds.values())) == 4
    assert seeds["forest"] == cli.stage_seed(5, "forest")
    assert cli.stage_seed(6, "forest") != seeds["forest"]
    assert all(0 <= v < 2 ** 63 for v in seeds.values())
    np.random.default_rng(seeds["network"])
