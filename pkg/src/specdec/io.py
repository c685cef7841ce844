"""Model, corpus, report and table files.

Loaders reject invalid input instead of repairing it, and every error names
where the problem is (line number, context key or field).
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .bench import RunReport
from .core import EOS, RESERVED_SYMBOLS, SpecDecError, Vocabulary
from .models import NgramModel

FORMAT_TAG = "specdec-ngram-v1"


class FormatError(SpecDecError):
    exit_code = 1


class CorpusError(SpecDecError):
    exit_code = 1


def _float(x: float) -> str:
    return format(float(x), ".17g")


def _sorted_entries(model: NgramModel):
    return sorted(model.table.items(), key=lambda kv: (len(kv[0]), kv[0]))


def dumps_model(model: NgramModel) -> str:
    """Canonical text: sorted keys, entries ordered by (len, ctx), 17 significant digits."""
    lines = ['{"entries": [']
    entries = _sorted_entries(model)
    for i, (ctx, lp) in enumerate(entries):
        sep = "," if i < len(entries) - 1 else ""
        lines.append('  {"ctx": [%s], "logprobs": [%s]}%s'
                     % (", ".join(str(t) for t in ctx), ", ".join(_float(x) for x in lp), sep))
    lines.append("],")
    lines.append(f'"format": {json.dumps(FORMAT_TAG)},')
    lines.append(f'"order": {model.order},')
    lines.append(f'"vocab": {json.dumps(list(model.vocab.symbols), ensure_ascii=False)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def model_hash(model: NgramModel) -> str:
    """SHA-256 of the canonical serialization."""
    return hashlib.sha256(dumps_model(model).encode("utf-8")).hexdigest()


def save_model(model: NgramModel, path) -> None:
    try:
        Path(path).write_text(dumps_model(model), encoding="utf-8")
    except OSError as exc:
        raise FormatError("IO_FAILURE", str(exc), where=str(path)) from None


def loads_model(text: str, where: str = "<string>") -> NgramModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError("MALFORMED_JSON", exc.msg, where=f"{where}:{exc.lineno}") from None
    if not isinstance(doc, dict):
        raise FormatError("MALFORMED_JSON", "top level must be an object", where=where)
    if doc.get("format") != FORMAT_TAG:
        raise FormatError("BAD_FORMAT_TAG", f"expected {FORMAT_TAG!r}, got {doc.get('format')!r}",
                          where="format")
    missing = {"vocab", "order", "entries"} - doc.keys()
    if missing:
        raise FormatError("MISSING_FIELD", ", ".join(sorted(missing)), where="/")
    extra = doc.keys() - {"format", "vocab", "order", "entries"}
    if extra:
        raise FormatError("UNKNOWN_FIELD", ", ".join(sorted(extra)), where="/")
    vocab = doc["vocab"]
    if not isinstance(vocab, list) or not all(isinstance(s, str) for s in vocab):
        raise FormatError("BAD_VOCAB", "vocab must be a list of strings", where="vocab")
    if tuple(vocab[:3]) != RESERVED_SYMBOLS:
        raise FormatError("BAD_RESERVED_TOKENS", f"vocab[0:3] must be {list(RESERVED_SYMBOLS)}",
                          where="vocab[0:3]")
    try:
        vocab = Vocabulary(tuple(vocab))
    except SpecDecError as exc:
        raise FormatError(exc.code, str(exc), where=exc.where) from None
    order = doc["order"]
    if not isinstance(order, int) or isinstance(order, bool) or order < 1:
        raise FormatError("BAD_ORDER", f"order={order!r}", where="order")
    if not isinstance(doc["entries"], list):
        raise FormatError("BAD_ENTRIES", "entries must be a list", where="entries")
    V = len(vocab)
    table = {}
    for i, e in enumerate(doc["entries"]):
        loc = f"entries[{i}]"
        if not isinstance(e, dict) or set(e) != {"ctx", "logprobs"}:
            raise FormatError("BAD_ENTRY", "expected keys ctx, logprobs", where=loc)
        ctx, lp = e["ctx"], e["logprobs"]
        if not isinstance(ctx, list) or not all(isinstance(t, int) and not isinstance(t, bool)
                                                for t in ctx):
            raise FormatError("BAD_CONTEXT", "ctx must be a list of ints", where=loc)
        key = f"ctx={ctx}"
        if len(ctx) > order - 1:
            raise FormatError("BAD_CONTEXT", f"ctx longer than order-1={order - 1}", where=key)
        if any(not 0 <= t < V for t in ctx):
            raise FormatError("TOKEN_OUT_OF_RANGE", "ctx token out of range", where=key)
        if tuple(ctx) in table:
            raise FormatError("DUPLICATE_CONTEXT", "context listed twice", where=key)
        if not isinstance(lp, list) or len(lp) != V or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in lp):
            raise FormatError("BAD_LOGPROB_LENGTH", f"logprobs must be {V} numbers", where=key)
        arr = np.asarray(lp, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FormatError("UNNORMALIZED_DISTRIBUTION", "non-finite logprob", where=key)
        m = float(arr.max())
        if abs(m + math.log(float(np.exp(arr - m).sum()))) > 1e-6:
            raise FormatError("UNNORMALIZED_DISTRIBUTION", "log-sum-exp differs from 0", where=key)
        table[tuple(ctx)] = arr
    return NgramModel(vocab, order, table, check=False)


def load_model(path) -> NgramModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError("IO_FAILURE", str(exc), where=str(path)) from None
    return loads_model(text, where=str(path))


def _read_lines(path) -> list:
    try:
        data = Path(path).read_bytes().decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError("IO_FAILURE", str(exc), where=str(path)) from None
    return data.splitlines()


def _parse_line(line: str, lineno: int):
    if "\t" not in line:
        raise CorpusError("MALFORMED_LINE", "expected source<TAB>target", where=f"line {lineno}")
    src, tgt = line.split("\t", 1)
    if "\t" in tgt:
        raise CorpusError("MALFORMED_LINE", "more than one tab", where=f"line {lineno}")
    return src.split(), tgt.split()


def load_corpus(path, vocab: Vocabulary) -> list:
    """Parse ``source<TAB>target`` lines into id pairs; EOS is appended to targets.

    Blank lines are skipped.
    """
    pairs = []
    eos = RESERVED_SYMBOLS[EOS]
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        src, tgt = _parse_line(line, lineno)
        if not tgt:
            raise CorpusError("EMPTY_TARGET", "target side is empty", where=f"line {lineno}")
        for side, toks in (("source", src), ("target", tgt)):
            for sym in toks:
                if sym not in vocab:
                    raise CorpusError("UNKNOWN_SYMBOL", repr(sym), where=f"line {lineno}")
            body = toks[:-1] if side == "target" else toks
            if eos in body:
                raise CorpusError("MISPLACED_EOS", f"{eos} inside {side}", where=f"line {lineno}")
        if tgt[-1] != eos:
            tgt = tgt + [eos]
        pairs.append((vocab.encode(src), vocab.encode(tgt)))
    return pairs


def count_examples(path) -> int:
    return sum(1 for line in _read_lines(path) if line.strip())


def vocab_from_corpus(path) -> Vocabulary:
    """Reserved symbols followed by corpus symbols in first-appearance order."""
    seen = dict.fromkeys(RESERVED_SYMBOLS)
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        src, tgt = _parse_line(line, lineno)
        for sym in src + tgt:
            seen.setdefault(sym)
    return Vocabulary(tuple(seen))


def dumps_report(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_report(report: RunReport, path) -> None:
    try:
        Path(path).write_text(dumps_report(report), encoding="utf-8")
    except OSError as exc:
        raise FormatError("IO_FAILURE", str(exc), where=str(path)) from None


def read_report(path) -> RunReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError("IO_FAILURE", str(exc), where=str(path)) from None
    except json.JSONDecodeError as exc:
        raise FormatError("MALFORMED_JSON", exc.msg, where=f"{path}:{exc.lineno}") from None
    try:
        return RunReport.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise FormatError("BAD_REPORT", str(exc), where=str(path)) from None


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def write_table(rows, path, columns) -> None:
    """Comma-separated table with a header row; floats keep full precision."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(row[c]) for c in columns])
    except OSError as exc:
        raise FormatError("IO_FAILURE", str(exc), where=str(path)) from None


def read_table(path) -> list:
    """Inverse of write_table; numeric cells come back as int or float."""
    def conv(s):
        for t in (int, float):
            try:
                return t(s)
            except ValueError:
                pass
        return s
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: conv(v) for k, v in row.items()} for row in csv.DictReader(fh)]
