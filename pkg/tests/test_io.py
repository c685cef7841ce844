import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import ABCD, A, B, C
from specdec import io
from specdec.bench import NoisyOracleFactory, run_corpus
from specdec.core import EOS, DecodeConfig, Strategy
from specdec.models import NgramModel, fit_ngram, random_model

MINIMAL = {"format": "specdec-ngram-v1", "vocab": ["<bos>", "<eos>", "<mask>", "a"],
           "order": 2, "entries": [{"ctx": [0], "logprobs": [-1e9, math.log(0.25),
                                                            -1e9, math.log(0.75)]}]}


def write(tmp_path, doc, name="m.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return p


class TestModelFile:
    def test_minimal_loads(self, tmp_path):
        m = io.load_model(write(tmp_path, MINIMAL))
        assert m.order == 2 and m.vocab_size == 4
        assert m.next_distribution([], []).top1 == 3

    def test_unnormalized_names_context(self, tmp_path):
        doc = json.loads(json.dumps(MINIMAL))
        doc["entries"][0]["logprobs"] = [-1e9, math.log(0.2), -1e9, math.log(0.7)]
        with pytest.raises(io.FormatError) as ei:
            io.load_model(write(tmp_path, doc))
        assert ei.value.code == "UNNORMALIZED_DISTRIBUTION"
        assert ei.value.where == "ctx=[0]"

    @pytest.mark.parametrize("mutate, code", [
        (lambda d: d.update(format="specdec-ngram-v2"), "BAD_FORMAT_TAG"),
        (lambda d: d.update(vocab=["<eos>", "<bos>", "<mask>", "a"]), "BAD_RESERVED_TOKENS"),
        (lambda d: d["entries"][0].update(ctx=[0, 0]), "BAD_CONTEXT"),
        (lambda d: d["entries"][0].update(ctx=[9]), "TOKEN_OUT_OF_RANGE"),
        (lambda d: d["entries"][0].update(logprobs=[0.0]), "BAD_LOGPROB_LENGTH"),
        (lambda d: d["entries"].append(dict(d["entries"][0])), "DUPLICATE_CONTEXT"),
        (lambda d: d.update(order=0), "BAD_ORDER"),
        (lambda d: d.pop("entries"), "MISSING_FIELD"),
        (lambda d: d.update(extra=1), "UNKNOWN_FIELD"),
    ])
    def test_rejections(self, tmp_path, mutate, code):
        doc = json.loads(json.dumps(MINIMAL))
        mutate(doc)
        with pytest.raises(io.FormatError) as ei:
            io.load_model(write(tmp_path, doc))
        assert ei.value.code == code
        assert ei.value.where is not None

    def test_malformed_json(self, tmp_path):
        with pytest.raises(io.FormatError, match="MALFORMED_JSON"):
            io.load_model(write(tmp_path, '{"format": '))

    def test_missing_file(self, tmp_path):
        with pytest.raises(io.FormatError, match="IO_FAILURE"):
            io.load_model(tmp_path / "nope.json")

    @settings(max_examples=25)
    @given(seed=st.integers(0, 2**32), order=st.integers(1, 3), conc=st.floats(1e-3, 10))
    def test_round_trip(self, tmp_path_factory, seed, order, conc):
        m = random_model(9, order, conc, seed)
        p = tmp_path_factory.mktemp("rt") / "m.json"
        io.save_model(m, p)
        assert io.load_model(p) == m

    def test_fitted_round_trip(self, tmp_path):
        m = fit_ngram([([], [A, B, EOS]), ([C], [B, EOS])], 3, 0.5, ABCD)
        io.save_model(m, tmp_path / "f.json")
        assert io.load_model(tmp_path / "f.json") == m

    def test_empty_order_one(self, tmp_path):
        m = NgramModel(ABCD, 1, {})
        io.save_model(m, tmp_path / "e.json")
        assert io.load_model(tmp_path / "e.json") == m

    def test_byte_identical_saves(self, tmp_path):
        m = random_model(10, 2, 0.3, 1)
        io.save_model(m, tmp_path / "a.json")
        io.save_model(random_model(10, 2, 0.3, 1), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        text = (tmp_path / "a.json").read_text()
        assert json.loads(text)["format"] == "specdec-ngram-v1"
        assert io.model_hash(m) == io.model_hash(io.load_model(tmp_path / "a.json"))

    def test_seventeen_digits(self):
        m = random_model(5, 1, 1.0, 0)
        row = io.dumps_model(m).split('"logprobs": [')[1].split("]")[0].split(", ")
        finite = [x for x in row if x != "-1000000000"]
        assert all(len(x.lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 17
                   for x in finite)
        assert [float(x) for x in row] == m.table[()].tolist()


class TestCorpusFile:
    def test_resolves_and_appends_eos(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("a b\tc d\n")
        assert io.load_corpus(p, ABCD) == [([A, B], [C, 6, EOS])]

    def test_existing_eos_kept(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("\ta <eos>\n")
        assert io.load_corpus(p, ABCD) == [([], [A, EOS])]

    def test_unknown_symbol_line(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("a\tb\nb\tc\na\tzz\n")
        with pytest.raises(io.CorpusError) as ei:
            io.load_corpus(p, ABCD)
        assert ei.value.code == "UNKNOWN_SYMBOL" and ei.value.where == "line 3"

    def test_empty_target(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("a b\t \n")
        with pytest.raises(io.CorpusError, match="EMPTY_TARGET"):
            io.load_corpus(p, ABCD)

    def test_missing_tab(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("a b c\n")
        with pytest.raises(io.CorpusError, match="MALFORMED_LINE"):
            io.load_corpus(p, ABCD)

    def test_crlf_matches_lf(self, tmp_path):
        text = "a b\tc d\nd\ta\n\nb\tb c <eos>\n"
        (tmp_path / "lf.txt").write_bytes(text.encode())
        (tmp_path / "crlf.txt").write_bytes(text.replace("\n", "\r\n").encode())
        lf = io.load_corpus(tmp_path / "lf.txt", ABCD)
        assert lf == io.load_corpus(tmp_path / "crlf.txt", ABCD)
        assert len(lf) == 3

    def test_vocab_from_corpus(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("x y\tz <eos>\ny\tx w\n")
        assert io.vocab_from_corpus(p).symbols == ("<bos>", "<eos>", "<mask>", "x", "y", "z", "w")


class TestReportsAndTables:
    def test_report_round_trip(self, tmp_path):
        m = random_model(12, 2, 0.5, 3)
        cfg = DecodeConfig(k=4, strategy=Strategy.SPECDEC_RELAXED, max_len=20)
        rep = run_corpus(m, NoisyOracleFactory(0.3, 1), [([4], [1]), ([5], [1])], cfg,
                         provenance={"target": "sha256:" + io.model_hash(m)})
        io.write_report(rep, tmp_path / "r.json")
        back = io.read_report(tmp_path / "r.json")
        assert back == rep
        io.write_report(back, tmp_path / "r2.json")
        assert (tmp_path / "r.json").read_bytes() == (tmp_path / "r2.json").read_bytes()

    def test_table_round_trip(self, tmp_path):
        rows = [{"k": 5, "tok": 3.3333333333333335, "speed": 2.0}, {"k": 10, "tok": 4.1,
                                                                     "speed": 2.5}]
        io.write_table(rows, tmp_path / "t.csv", ["k", "tok", "speed"])
        assert io.read_table(tmp_path / "t.csv") == rows
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "k,tok,speed"

    def test_empty_table(self, tmp_path):
        io.write_table([], tmp_path / "t.csv", ["beta", "tau", "tok"])
        assert (tmp_path / "t.csv").read_text() == "beta,tau,tok\n"
        assert io.read_table(tmp_path / "t.csv") == []

    def test_bad_report(self, tmp_path):
        (tmp_path / "r.json").write_text("{}")
        with pytest.raises(io.FormatError, match="BAD_REPORT"):
            io.read_report(tmp_path / "r.json")
