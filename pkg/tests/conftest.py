import math

import hypothesis
import numpy as np
import pytest

from specdec.core import LOGPROB_FLOOR, Vocabulary
from specdec.models import NgramModel

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")

ABCD = Vocabulary.from_content(["a", "b", "c", "d"])
A, B, C, D = 3, 4, 5, 6


def one_hot_row(V, tok):
    row = np.full(V, LOGPROB_FLOOR)
    row[tok] = 0.0
    return row


def chain_model(transitions, vocab=ABCD, order=2):
    """Order-2 model where ``transitions[prev] = next`` with probability one."""
    V = len(vocab)
    return NgramModel(vocab, order, {(p,): one_hot_row(V, n) for p, n in transitions.items()})


def probs_model(rows, vocab=ABCD, order=2):
    """Order-2 model from ``{prev: {tok: prob}}`` (missing tokens get zero)."""
    V = len(vocab)
    table = {}
    for prev, dist in rows.items():
        row = np.full(V, LOGPROB_FLOOR)
        for t, p in dist.items():
            row[t] = math.log(p)
        table[(prev,)] = row
    return NgramModel(vocab, order, table)


def logsumexp_oracle(v):
    """Plain-Python log-sum-exp, independent of the numpy path under test."""
    m = max(v)
    return m + math.log(math.fsum(math.exp(x - m) for x in v))


@pytest.fixture
def abc_chain():
    # BOS -> a -> b -> EOS
    return chain_model({0: A, A: B, B: 1})


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
