import json
import math
import re
import subprocess
import sys

import pytest

from specdec import io
from specdec.cli import main

SUMMARY = re.compile(r"^tok=(\d+\.\d+) speedup=(\d+\.\d+)$")


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-model", "--vocab-size", "20", "--order", "2", "--concentration", "0.4",
                 "--seed", "3", "--out", str(d / "target.json")]) == 0
    assert main(["gen-model", "--vocab-size", "20", "--order", "2", "--concentration", "0.4",
                 "--seed", "4", "--out", str(d / "drafter.json")]) == 0
    assert main(["gen-model", "--vocab-size", "20", "--concentration", "0.4", "--seed", "5",
                 "--no-eos", "--out", str(d / "endless.json")]) == 0
    lines = [f"t{3 + i % 17} t{3 + (2 * i) % 17}\tt3" for i in range(24)]
    (d / "corpus.txt").write_text("\n".join(lines) + "\n")
    return d


def run_args(files, *extra, report="r.json"):
    return ["run", "--target", str(files / "target.json"), "--input",
            str(files / "corpus.txt"), "--report", str(files / report), "--max-len", "40",
            *extra]


def test_gen_model(files, tmp_path):
    main(["gen-model", "--vocab-size", "20", "--order", "2", "--concentration", "0.4",
          "--seed", "3", "--out", str(tmp_path / "again.json")])
    assert (tmp_path / "again.json").read_bytes() == (files / "target.json").read_bytes()
    m = io.load_model(files / "target.json")
    assert m.vocab.symbols[:3] == ("<bos>", "<eos>", "<mask>")


def test_gen_model_perturbed(files, tmp_path):
    out = tmp_path / "p.json"
    args = ["gen-model", "--perturb-of", str(files / "target.json"), "--noise", "0.8",
            "--seed", "2", "--out", str(out)]
    assert main(args) == 0
    first = out.read_bytes()
    assert main(args) == 0 and out.read_bytes() == first
    p, t = io.load_model(out), io.load_model(files / "target.json")
    assert p.vocab == t.vocab and p.order == t.order and p != t
    assert main([*args[:3], "--noise", "-1", "--out", str(out)]) == 2
    assert main(["gen-model", "--out", str(out)]) == 2


def test_run_perfect_drafter(files, capsys):
    code = main(run_args(files, "--drafter", str(files / "target.json"), "--strategy",
                         "specdec-vanilla", "--k", "5"))
    assert code == 0
    tok, _ = map(float, SUMMARY.match(capsys.readouterr().out.strip()).groups())
    rep = json.loads((files / "r.json").read_text())
    assert rep["aggregate"]["divergence_rate"] == 0.0
    lengths = [s["length"] for s in rep["sequences"]]
    iters = sum(math.ceil(L / 5) for L in lengths)
    assert tok == pytest.approx(sum(lengths) / iters, abs=1e-6)
    assert tok <= min(5, sum(lengths) / len(lengths))


def test_run_reference_defaults(files, capsys):
    code = main(run_args(files, "--noisy-oracle", "0.2", "--beta", "3", "--tau", "1.0",
                         "--k", "25"))
    assert code == 0
    assert SUMMARY.match(capsys.readouterr().out.strip())
    cfg = json.loads((files / "r.json").read_text())["provenance"]["config"]
    assert (cfg["k"], cfg["beta"], cfg["tau"], cfg["strategy"]) == (25, 3, 1.0, "specdec-relaxed")


def test_run_is_byte_identical_and_jobs_independent(files):
    args = ("--noisy-oracle", "0.3", "--k", "6", "--seed", "11")
    assert main(run_args(files, *args, report="a.json")) == 0
    assert main(run_args(files, *args, report="b.json")) == 0
    assert main(run_args(files, *args, "--jobs", "4", report="c.json")) == 0
    a = (files / "a.json").read_bytes()
    assert a == (files / "b.json").read_bytes() == (files / "c.json").read_bytes()


def test_run_with_timing(files):
    assert main(run_args(files, "--noisy-oracle", "0.3", "--timing", report="t.json")) == 0
    rep = json.loads((files / "t.json").read_text())
    assert rep["sequences"][0]["wall_clock"] > 0


@pytest.mark.parametrize("extra, code", [
    (["--noisy-oracle", "0.3", "--beta", "50"], 2),
    (["--noisy-oracle", "0.3", "--k", "0"], 2),
    (["--noisy-oracle", "0.3", "--tau", "-1"], 2),
    (["--noisy-oracle", "1.5"], 2),
    (["--strategy", "specdec-vanilla"], 2),
    (["--noisy-oracle", "0.3", "--costs", "1,2"], 2),
    (["--drafter", "/nonexistent/model.json"], 1),
])
def test_run_errors(files, capsys, extra, code):
    assert main(run_args(files, *extra)) == code
    assert "specdec run" in capsys.readouterr().err


def test_unknown_flag_exits_2(files):
    assert main(run_args(files, "--noisy-oracle", "0.3", "--bogus")) == 2


def test_bad_corpus_exits_1(files, tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("t3\tt4\nt3\tqq\n")
    args = ["run", "--target", str(files / "target.json"), "--input", str(tmp_path / "bad.txt"),
            "--noisy-oracle", "0.1", "--report", str(tmp_path / "r.json")]
    assert main(args) == 1
    assert "line 2" in capsys.readouterr().err


def test_sweep_k(files, capsys):
    base = ["--target", str(files / "endless.json"), "--input", str(files / "corpus.txt"),
            "--noisy-oracle", "0.2", "--max-len", "60"]
    assert main(["sweep-k", *base, "--k-list", "2,5,10", "--out", str(files / "k.csv")]) == 0
    rows = io.read_table(files / "k.csv")
    assert [r["k"] for r in rows] == [2, 5, 10]
    assert list(rows[0]) == ["k", "tok", "speed"]
    toks = [r["tok"] for r in rows]
    assert toks == sorted(toks)
    capsys.readouterr()
    # a one-value sweep agrees with cmd_run aggregates
    assert main(["sweep-k", *base, "--k-list", "5", "--out", str(files / "k1.csv")]) == 0
    assert main(["run", *base, "--k", "5", "--strategy", "specdec-vanilla", "--report",
                 str(files / "k1.json")]) == 0
    out = capsys.readouterr().out.strip().splitlines()[-1]
    tok, speed = map(float, SUMMARY.match(out).groups())
    (row,) = io.read_table(files / "k1.csv")
    assert row["tok"] == pytest.approx(tok, abs=1e-6)
    assert row["speed"] == pytest.approx(speed, abs=1e-6)


def test_sweep_verify(files):
    args = ["sweep-verify", "--target", str(files / "target.json"), "--drafter",
            str(files / "drafter.json"), "--input", str(files / "corpus.txt"), "--k", "10",
            "--beta-list", "1,3,5", "--tau-list", "0,1,2,3,4,5", "--out", str(files / "v.csv")]
    assert main(args) == 0
    rows = io.read_table(files / "v.csv")
    assert len(rows) == 18
    assert list(rows[0]) == ["beta", "tau", "tok", "speed", "divergence"]
    assert rows[0]["beta"] == 1 and rows[0]["tau"] == 0 and rows[0]["divergence"] == 0
    for beta in (1, 3, 5):
        toks = [r["tok"] for r in rows if r["beta"] == beta]
        assert toks == sorted(toks)


def test_fit(tmp_path):
    (tmp_path / "c.txt").write_text("\ta b\n")
    assert main(["fit", "--corpus", str(tmp_path / "c.txt"), "--order", "2",
                 "--out", str(tmp_path / "m.json")]) == 0
    m = io.load_model(tmp_path / "m.json")
    a, b = m.vocab.index("a"), m.vocab.index("b")
    assert m.greedy_rollout([], [], 10) == [a, b, 1]
    assert m.next_distribution([], [a]).logprobs[b] == 0.0


def test_fit_hand_counts(tmp_path):
    (tmp_path / "c.txt").write_text("\ta b\n\ta c\nx\ta b\n")
    assert main(["fit", "--corpus", str(tmp_path / "c.txt"), "--smoothing", "0",
                 "--out", str(tmp_path / "m.json")]) == 0
    m = io.load_model(tmp_path / "m.json")
    a, b, c = (m.vocab.index(s) for s in "abc")
    lp = m.next_distribution([], [a]).logprobs
    assert math.exp(lp[b]) == pytest.approx(2 / 3)
    assert math.exp(lp[c]) == pytest.approx(1 / 3)


def test_fit_empty_corpus(tmp_path):
    (tmp_path / "c.txt").write_text("")
    assert main(["fit", "--corpus", str(tmp_path / "c.txt"), "--out",
                 str(tmp_path / "m.json")]) == 2


def test_compare(files):
    args = ["compare", "--target", str(files / "target.json"), "--noisy-oracle", "0.3",
            "--input", str(files / "corpus.txt"), "--k", "10", "--beam-width", "1",
            "--out", str(files / "cmp.csv")]
    assert main(args) == 0
    rows = {r["strategy"]: r for r in io.read_table(files / "cmp.csv")}
    assert list(rows) == ["ar-greedy", "ar-beam", "specdec-vanilla", "specdec-relaxed"]
    assert rows["specdec-vanilla"]["divergence"] == 0
    assert rows["ar-beam"]["divergence"] == 0
    assert rows["specdec-relaxed"]["tok"] >= rows["specdec-vanilla"]["tok"]


def test_module_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "specdec", "run", *run_args(files,
                          "--noisy-oracle", "0.0", "--k", "4", "--strategy", "specdec-vanilla",
                          report="m.json")[1:]], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert SUMMARY.match(proc.stdout.strip())
