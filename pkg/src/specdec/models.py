"""Desk-scale target and drafter models.

Every model here is an exact-context n-gram table, which keeps decoding
behaviour fully predictable: the next-token distribution is a dictionary
lookup, and greedy continuations can be recomputed by hand in tests.

Toy models condition on ``source + [BOS] + prefix`` read as one stream.
Source and prefix stay separate arguments so a real encoder-decoder could sit
behind the same calls.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence as Seq

import numpy as np

from .core import (BOS, EOS, LOGPROB_FLOOR, MASK, SpecDecError, Vocabulary, check_sequence,
                   rng_stream)

MAX_RANDOM_CONTEXTS = 2_000_000


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def _freeze(v) -> np.ndarray:
    a = np.array(v, dtype=np.float64)
    np.maximum(a, LOGPROB_FLOOR, out=a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PositionScores:
    """Log-probabilities over the vocabulary for one target position."""

    logprobs: np.ndarray
    top1: int = -1

    def __post_init__(self):
        if self.top1 < 0:
            object.__setattr__(self, "top1", int(np.argmax(self.logprobs)))

    def _cached(self):
        try:
            return self.__dict__["_cache"]
        except KeyError:
            asc = np.sort(self.logprobs)
            greater = len(asc) - np.searchsorted(asc, self.logprobs, side="right")
            cache = (self.logprobs.tolist(), (1 + greater).tolist(), asc[::-1].tolist())
            object.__setattr__(self, "_cache", cache)
            return cache

    def logprob(self, token: int) -> float:
        return self._cached()[0][token]

    def rank_of(self, token: int) -> int:
        """1-based rank; tokens with equal log-probability share the better rank."""
        return self._cached()[1][token]

    def kth_logprob(self, k: int) -> float:
        """Log-probability of the k-th ranked candidate (1-based)."""
        return self._cached()[2][k - 1]

    def __eq__(self, other):
        if not isinstance(other, PositionScores):
            return NotImplemented
        return self.top1 == other.top1 and np.array_equal(self.logprobs, other.logprobs)


@dataclass(frozen=True)
class DraftBlock:
    tokens: tuple
    # per-position corruption flags, only set by the noisy-oracle drafter
    corrupted: Optional[tuple] = None

    def __len__(self):
        return len(self.tokens)


class NgramModel:
    """Exact-context n-gram table.

    ``table`` maps a context tuple (most recent token last) of length
    ``min(order - 1, available)`` to a normalized log-probability vector.
    Unseen contexts fall back to the uniform distribution.
    """

    def __init__(self, vocab: Vocabulary, order: int, table: dict, check: bool = True):
        if order < 1:
            raise SpecDecError("BAD_ORDER", f"order={order}", where="order")
        self.vocab = vocab
        self.order = order
        V = len(vocab)
        frozen = {}
        for ctx, lp in table.items():
            ctx = tuple(int(t) for t in ctx)
            arr = _freeze(lp)
            if check:
                if len(ctx) > order - 1:
                    raise SpecDecError("BAD_CONTEXT", f"context longer than order-1={order - 1}",
                                       where=f"ctx={list(ctx)}")
                if any(not 0 <= t < V for t in ctx):
                    raise SpecDecError("TOKEN_OUT_OF_RANGE", "context token out of range",
                                       where=f"ctx={list(ctx)}")
                if arr.shape != (V,):
                    raise SpecDecError("BAD_LOGPROB_LENGTH", f"expected {V} values, got {arr.size}",
                                       where=f"ctx={list(ctx)}")
                if not np.all(np.isfinite(arr)) or abs(_logsumexp(arr)) > 1e-6:
                    raise SpecDecError("UNNORMALIZED_DISTRIBUTION",
                                       "log-sum-exp differs from 0", where=f"ctx={list(ctx)}")
            frozen[ctx] = PositionScores(arr)
        self._table = frozen
        self._uniform = PositionScores(_freeze(np.full(V, -np.log(V))), 0)

    @property
    def table(self) -> dict:
        return {ctx: s.logprobs for ctx, s in self._table.items()}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def __eq__(self, other):
        if not isinstance(other, NgramModel):
            return NotImplemented
        if self.vocab != other.vocab or self.order != other.order:
            return False
        if self._table.keys() != other._table.keys():
            return False
        return all(np.array_equal(s.logprobs, other._table[c].logprobs)
                   for c, s in self._table.items())

    def __repr__(self):
        return f"NgramModel(V={self.vocab_size}, order={self.order}, contexts={len(self._table)})"

    def context(self, source: Seq[int], prefix: Seq[int]) -> tuple:
        n = self.order - 1
        if n == 0:
            return ()
        if len(prefix) >= n:
            return tuple(prefix[len(prefix) - n:])
        need = n - len(prefix) - 1
        head = tuple(source[max(0, len(source) - need):]) if need > 0 else ()
        return head + (BOS,) + tuple(prefix)

    def lookup(self, ctx: tuple) -> PositionScores:
        return self._table.get(ctx, self._uniform)

    # the three methods below are the interface decode.py relies on

    def next_distribution(self, source: Seq[int], prefix: Seq[int]) -> PositionScores:
        check_sequence(source, self.vocab_size, "source")
        check_sequence(prefix, self.vocab_size, "prefix")
        return self.lookup(self.context(source, prefix))

    def score_positions_parallel(self, source, prefix, drafts) -> list:
        """One verification pass: element i scores position i given drafts[:i]."""
        tokens = drafts.tokens if isinstance(drafts, DraftBlock) else tuple(drafts)
        if not tokens:
            raise SpecDecError("EMPTY_DRAFT", "draft block must hold at least one token")
        check_sequence(source, self.vocab_size, "source")
        check_sequence(prefix, self.vocab_size, "prefix")
        for i, t in enumerate(tokens):
            if not 0 <= t < self.vocab_size:
                raise SpecDecError("TOKEN_OUT_OF_RANGE", f"token {t}", where=f"drafts[{i}]")
        stream = list(prefix)
        out = []
        for t in tokens:
            out.append(self.lookup(self.context(source, stream)))
            stream.append(t)
        return out

    def greedy_rollout(self, source, prefix, steps: int) -> list:
        if steps < 1:
            raise SpecDecError("NONPOSITIVE_STEPS", f"steps={steps}")
        check_sequence(source, self.vocab_size, "source")
        check_sequence(prefix, self.vocab_size, "prefix")
        stream = list(prefix)
        out = []
        for _ in range(steps):
            tok = self.lookup(self.context(source, stream)).top1
            out.append(tok)
            stream.append(tok)
            if tok == EOS:
                break
        return out


def next_distribution(model: NgramModel, source, prefix) -> PositionScores:
    return model.next_distribution(source, prefix)


def score_positions_parallel(model: NgramModel, source, prefix, drafts) -> list:
    return model.score_positions_parallel(source, prefix, drafts)


def greedy_rollout(model: NgramModel, source, prefix, steps: int) -> list:
    return model.greedy_rollout(source, prefix, steps)


def _pad(tokens: list, k: int) -> tuple:
    return tuple(tokens) + (EOS,) * (k - len(tokens))


class Drafter(Protocol):
    def draft(self, source: Seq[int], prefix: Seq[int], k: int) -> DraftBlock: ...


@dataclass(frozen=True)
class SelfRolloutDrafter:
    """Drafts k tokens by greedy self-rollout of its own n-gram model.

    Counts as one drafting event. After EOS the block is padded with EOS.
    """

    model: NgramModel

    def draft(self, source, prefix, k: int) -> DraftBlock:
        return draft_block_selfrollout(self.model, source, prefix, k)


def draft_block_selfrollout(drafter: NgramModel, source, prefix, k: int) -> DraftBlock:
    if k < 1:
        raise SpecDecError("NONPOSITIVE_K", f"k={k}", where="k")
    return DraftBlock(_pad(drafter.greedy_rollout(source, prefix, k), k))


@dataclass
class NoisyOracleDrafter:
    """Target-greedy continuation with independent per-position corruption.

    For each of the k positions one uniform draw decides corruption (fires
    when ``u < p``); a corrupted position then takes a token drawn uniformly
    from the vocabulary minus the greedy token and MASK. The random stream
    belongs to a single sequence's decode loop.
    """

    target: NgramModel
    p: float
    rng: np.random.Generator = field(repr=False, default=None)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise SpecDecError("BAD_CORRUPTION_PROB", f"p={self.p}", where="p")
        if self.rng is None:
            self.rng = rng_stream(0, 0)

    @classmethod
    def seeded(cls, target: NgramModel, p: float, seed: int, stream_id: int):
        return cls(target, p, rng_stream(seed, stream_id))

    def draft(self, source, prefix, k: int) -> DraftBlock:
        return draft_block_noisy_oracle(self, source, prefix, k)


def draft_block_noisy_oracle(drafter: NoisyOracleDrafter, source, prefix, k: int) -> DraftBlock:
    if k < 1:
        raise SpecDecError("NONPOSITIVE_K", f"k={k}", where="k")
    greedy = _pad(drafter.target.greedy_rollout(source, prefix, k), k)
    V = drafter.target.vocab_size
    rng = drafter.rng
    tokens, flags = [], []
    for g in greedy:
        fired = rng.random() < drafter.p
        if fired:
            candidates = [t for t in range(V) if t != g and t != MASK]
            tokens.append(candidates[int(rng.integers(len(candidates)))])
        else:
            tokens.append(g)
        flags.append(fired)
    return DraftBlock(tuple(tokens), tuple(flags))


def random_model(vocab_size: int, order: int, concentration: float, seed: int,
                 allow_eos: bool = True) -> NgramModel:
    """Random n-gram model with Dirichlet(concentration) rows.

    Every context of every length 1..order-1 (just ``()`` for order 1) gets a
    row. BOS and MASK are never predicted; with ``allow_eos=False`` neither is
    EOS, which gives models whose greedy output never terminates. Smaller
    concentration means peakier rows.
    """
    if vocab_size < 4:
        raise SpecDecError("VOCAB_TOO_SMALL", f"vocab_size={vocab_size}")
    if order < 1:
        raise SpecDecError("BAD_ORDER", f"order={order}")
    if not concentration > 0:
        raise SpecDecError("BAD_CONCENTRATION", f"concentration={concentration}")
    vocab = Vocabulary.synthetic(vocab_size)
    if order == 1:
        contexts = [()]
    else:
        n_ctx = sum(vocab_size ** n for n in range(1, order))
        if n_ctx > MAX_RANDOM_CONTEXTS:
            raise SpecDecError("MODEL_TOO_LARGE", f"{n_ctx} contexts")
        contexts = [c for n in range(1, order)
                    for c in itertools.product(range(vocab_size), repeat=n)]
    allowed = [t for t in range(vocab_size) if t not in (BOS, MASK) and (allow_eos or t != EOS)]
    rng = np.random.default_rng(np.random.SeedSequence([seed, vocab_size, order]))
    a = float(concentration)
    shape = (len(contexts), len(allowed))
    # log of Gamma(a) variates: log G(a+1) + log(U)/a stays finite for tiny a
    logg = np.log(rng.gamma(a + 1.0, size=shape)) + np.log(rng.random(size=shape)) / a
    logg -= logg.max(axis=1, keepdims=True)
    logg -= np.log(np.exp(logg).sum(axis=1, keepdims=True))
    rows = np.full((len(contexts), vocab_size), LOGPROB_FLOOR)
    rows[:, allowed] = np.maximum(logg, LOGPROB_FLOOR)
    return NgramModel(vocab, order, dict(zip(contexts, rows)), check=False)


def perturbed_model(model: NgramModel, noise: float, seed: int) -> NgramModel:
    """Copy of ``model`` with N(0, noise) added to each supported logprob, renormalized.

    A cheap stand-in for a drafter distilled from the target: it tends to
    disagree where the target's top candidates are close. Floored entries stay
    floored, so the support is unchanged.
    """
    if not noise >= 0:
        raise SpecDecError("BAD_NOISE", f"noise={noise}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, model.vocab_size, model.order]))
    table = {}
    for ctx, lp in sorted(model.table.items(), key=lambda kv: (len(kv[0]), kv[0])):
        live = lp > LOGPROB_FLOOR
        x = np.where(live, lp + noise * rng.standard_normal(lp.shape), LOGPROB_FLOOR)
        m = x[live].max()
        x[live] -= m + np.log(np.exp(x[live] - m).sum())
        table[ctx] = np.maximum(x, LOGPROB_FLOOR)
    return NgramModel(model.vocab, model.order, table, check=False)


def fit_ngram(corpus, order: int, smoothing: float, vocab: Vocabulary) -> NgramModel:
    """Count-based fit over ``(source, target)`` pairs with add-``smoothing``.

    Only contexts observed in the corpus get table rows.
    """
    corpus = list(corpus)
    if not corpus:
        raise SpecDecError("EMPTY_CORPUS", "corpus has no examples")
    if order < 1:
        raise SpecDecError("BAD_ORDER", f"order={order}")
    if smoothing < 0:
        raise SpecDecError("NEGATIVE_SMOOTHING", f"smoothing={smoothing}")
    V = len(vocab)
    counts: dict = {}
    shell = NgramModel(vocab, order, {}, check=False)
    for line, (source, target) in enumerate(corpus, 1):
        if not target or target[-1] != EOS:
            raise SpecDecError("BAD_TARGET_TERMINATION", "target must end with EOS",
                               where=f"example {line}")
        check_sequence(source, V, f"example {line} source")
        check_sequence(target, V, f"example {line} target")
        for j, tok in enumerate(target):
            ctx = shell.context(source, target[:j])
            row = counts.get(ctx)
            if row is None:
                row = counts[ctx] = np.zeros(V)
            row[tok] += 1
    table = {}
    with np.errstate(divide="ignore"):
        for ctx, row in counts.items():
            probs = (row + smoothing) / (row.sum() + smoothing * V)
            table[ctx] = np.log(probs)
    return NgramModel(vocab, order, table, check=False)
