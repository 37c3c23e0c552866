import json
import subprocess
import sys

import pytest

from qmatch.cli import main


def run(*args):
    return main(["-q", *map(str, args)])


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("make-synthetic", "--out", d / "data", "--corpus-sentences", 3000, "--train-queries", 60) == 0
    assert run("train-embeddings", "--corpus", d / "data/corpus.txt", "--dim", 16, "--epochs", 2,
               "--out", d / "emb.txt") == 0
    assert run("build-index", "--pool", d / "data/pool.tsv", "--embeddings", d / "emb.txt", "--out", d / "idx.bin") == 0
    assert run("train-reranker", "--pool", d / "data/pool.tsv", "--pairs", d / "data/pairs.tsv",
               "--embeddings", d / "emb.txt", "--index", d / "idx.bin", "--epochs", 2, "--hidden", 8,
               "--out", d / "model.bin") == 0
    return d


def test_train_embeddings_dimension(tmp_path):
    corpus = tmp_path / "c.txt"
    corpus.write_text("a b c d e\n" * 20, encoding="utf-8")
    assert run("train-embeddings", "--corpus", corpus, "--epochs", 1, "--out", tmp_path / "v200.txt") == 0
    assert (tmp_path / "v200.txt").read_text().splitlines()[0] == "5 200"
    assert run("train-embeddings", "--corpus", corpus, "--epochs", 1, "--dim", 50, "--out", tmp_path / "v50.txt") == 0
    assert (tmp_path / "v50.txt").read_text().splitlines()[0] == "5 50"
    assert run("train-embeddings", "--corpus", corpus, "--epochs", 1, "--dim", 50, "--out", tmp_path / "again.txt") == 0
    assert (tmp_path / "again.txt").read_bytes() == (tmp_path / "v50.txt").read_bytes()


def test_config_file_and_flag_override(tmp_path):
    corpus = tmp_path / "c.txt"
    corpus.write_text("a b c d e\n" * 20, encoding="utf-8")
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[qmatch]\nseed = 3\n\n[train-embeddings]\ncorpus = {corpus}\ndim = 7\nepochs = 1\n"
                   f"out = {tmp_path / 'v.txt'}\n", encoding="utf-8")
    assert run("train-embeddings", "--config", cfg) == 0
    assert (tmp_path / "v.txt").read_text().splitlines()[0] == "5 7"
    assert run("train-embeddings", "--config", cfg, "--dim", 9) == 0
    assert (tmp_path / "v.txt").read_text().splitlines()[0] == "5 9"
    cfg.write_text("[train-embeddings]\nbogus = 1\n", encoding="utf-8")
    assert run("train-embeddings", "--config", cfg) == 1


def test_history_and_split_logged(artifacts, caplog):
    lines = (artifacts / "model.bin.history.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc" and len(lines) == 3
    with caplog.at_level("INFO"):
        main(["train-reranker", "--pool", str(artifacts / "data/pool.tsv"), "--pairs", str(artifacts / "data/pairs.tsv"),
              "--embeddings", str(artifacts / "emb.txt"), "--index", str(artifacts / "idx.bin"), "--epochs", "1",
              "--hidden", "8", "--out", str(artifacts / "m1.bin")])
    assert "216 train / 24 validation" in caplog.text


def test_query_modes(artifacts, capsys):
    assert run("query", "--index", artifacts / "idx.bin", "--stage1-only", "--n", 4, "--text", "t1a t2a") == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["entries"]) == 4 and out["entries"][0]["stage2_score"] is None
    assert run("query", "--index", artifacts / "idx.bin", "--stage1-only", "--text", "unknownword") == 0
    assert json.loads(capsys.readouterr().out)["entries"] == []
    assert run("query", "--index", artifacts / "idx.bin", "--model", artifacts / "model.bin",
               "--embeddings", artifacts / "emb.txt", "--n", 5, "--text", "t1a t2a") == 0
    out = json.loads(capsys.readouterr().out)
    assert all(e["stage2_score"] is not None for e in out["entries"])


def test_query_batch_of_500(artifacts, tmp_path):
    queries = (artifacts / "data/queries.tsv").read_text().splitlines()
    lines = [f"b{i}\t{queries[i % len(queries)].split(chr(9))[1]}" for i in range(500)]
    (tmp_path / "q.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert run("query", "--index", artifacts / "idx.bin", "--model", artifacts / "model.bin", "--embeddings",
               artifacts / "emb.txt", "--batch", tmp_path / "q.tsv", "--n", 10, "--out", tmp_path / "r.jsonl") == 0
    out = (tmp_path / "r.jsonl").read_text().splitlines()
    assert len(out) == 500 and json.loads(out[-1])["query_id"] == "b499"


def test_evaluate_four_configs_and_single_k(artifacts, tmp_path):
    common = ["--index", artifacts / "idx.bin", "--queries", artifacts / "data/queries.tsv",
              "--gold", artifacts / "data/gold.tsv"]
    assert run("evaluate", *common, "--model", artifacts / "model.bin", "--embeddings", artifacts / "emb.txt",
               "--out", tmp_path / "r.csv") == 0
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "config,k,count,ratio,mrr"
    assert {r.split(",")[0] for r in rows[1:]} == {"tfidf", "soft", "tfidf+dl", "soft+dl"}
    assert len(rows) == 1 + 4 * 19
    assert json.loads((tmp_path / "r.json").read_text())[0]["config"] == "tfidf"
    assert run("evaluate", *common, "--ks", 50, "--out", tmp_path / "one.csv") == 0
    assert len((tmp_path / "one.csv").read_text().splitlines()) == 3
    (tmp_path / "bad_gold.tsv").write_text("uq0000\tnope\n", encoding="utf-8")
    assert run("evaluate", "--index", artifacts / "idx.bin", "--queries", artifacts / "data/queries.tsv",
               "--gold", tmp_path / "bad_gold.tsv", "--out", tmp_path / "x.csv") == 1


def test_cosine_only_index(artifacts, tmp_path):
    assert run("build-index", "--pool", artifacts / "data/pool.tsv", "--cosine-only", "--out", tmp_path / "c.bin") == 0
    assert run("query", "--index", tmp_path / "c.bin", "--stage1-only", "--metric", "soft-cosine", "--text", "t1a") == 1
    assert run("query", "--index", tmp_path / "c.bin", "--stage1-only", "--metric", "cosine", "--text", "t1a") == 0


def test_rebuild_is_byte_identical(artifacts, tmp_path):
    assert run("build-index", "--pool", artifacts / "data/pool.tsv", "--embeddings", artifacts / "emb.txt",
               "--out", tmp_path / "again.bin") == 0
    assert (tmp_path / "again.bin").read_bytes() == (artifacts / "idx.bin").read_bytes()


def test_failures_exit_nonzero_with_one_line(tmp_path):
    singles = tmp_path / "pairs.tsv"
    pool = tmp_path / "pool.tsv"
    pool.write_text("s1\t\ta b\n", encoding="utf-8")
    singles.write_text("p1\ta\ts1\t1\n", encoding="utf-8")
    (tmp_path / "e.txt").write_text("1 2\na 1 2\n", encoding="utf-8")
    assert run("build-index", "--pool", pool, "--cosine-only", "--out", tmp_path / "i.bin") == 0
    proc = subprocess.run([sys.executable, "-m", "qmatch.cli", "train-reranker", "--pool", str(pool), "--pairs",
                           str(singles), "--embeddings", str(tmp_path / "e.txt"), "--index", str(tmp_path / "i.bin"),
                           "--out", str(tmp_path / "m.bin")], capture_output=True, text=True)
    assert proc.returncode != 0
    err = proc.stderr.strip().splitlines()
    assert len(err) == 1 and "both positive and negative" in err[0]
    assert not (tmp_path / "m.bin").exists()
    proc = subprocess.run([sys.executable, "-m", "qmatch.cli", "query", "--index", str(tmp_path / "missing.bin"),
                           "--text", "x"], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.count("\n") == 1 and "not found" in proc.stderr
    assert run("query", "--index", tmp_path / "i.bin", "--text", "a") == 1
