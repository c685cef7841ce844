"""Decoding: AR greedy/beam baselines and the draft-then-verify loop."""
from __future__ import annotations

from dataclasses import dataclass

from .core import (EOS, CostModel, DecodeConfig, IterationRecord, SpecDecError, Strategy,
                   check_sequence, validate_config)

DEFAULT_COSTS = CostModel()


@dataclass(frozen=True)
class Decision:
    draft: int
    ar_top1: int
    accepted: bool
    draft_logprob: float
    top1_logprob: float
    rank_of_draft: int

    def to_dict(self) -> dict:
        return {"draft": self.draft, "ar_top1": self.ar_top1, "accepted": self.accepted,
                "draft_logprob": self.draft_logprob, "top1_logprob": self.top1_logprob,
                "rank_of_draft": self.rank_of_draft}


@dataclass(frozen=True)
class VerifyOutcome:
    emitted: tuple
    bifurcation: int
    decisions: tuple

    @property
    def accepted(self) -> int:
        """Number of drafted tokens accepted before the first rejection."""
        n = 0
        for d in self.decisions:
            if not d.accepted:
                break
            n += 1
        return n

    def to_dict(self) -> dict:
        return {"emitted": list(self.emitted), "bifurcation": self.bifurcation,
                "decisions": [d.to_dict() for d in self.decisions]}


@dataclass(frozen=True)
class DecodeResult:
    output: tuple
    iterations: tuple
    trace: tuple = ()


def find_bifurcation(drafts, ar_argmax) -> int:
    """1-based index of the first disagreement; k when everything matches."""
    drafts, ar_argmax = _tokens(drafts), list(ar_argmax)
    if len(drafts) != len(ar_argmax):
        raise SpecDecError("LENGTH_MISMATCH", f"{len(drafts)} drafts vs {len(ar_argmax)} argmax")
    if not drafts:
        raise SpecDecError("LENGTH_MISMATCH", "empty block")
    for i, (d, a) in enumerate(zip(drafts, ar_argmax), 1):
        if d != a:
            return i
    return len(drafts)


def _tokens(drafts) -> list:
    return list(getattr(drafts, "tokens", drafts))


def _decision(draft: int, scores, accepted: bool) -> Decision:
    return Decision(draft, scores.top1, accepted, scores.logprob(draft),
                    scores.logprob(scores.top1), scores.rank_of(draft))


def vanilla_verify(drafts, scores) -> VerifyOutcome:
    drafts = _tokens(drafts)
    if len(drafts) != len(scores):
        raise SpecDecError("LENGTH_MISMATCH", f"{len(drafts)} drafts vs {len(scores)} scores")
    argmax = [s.top1 for s in scores]
    c = find_bifurcation(drafts, argmax)
    emitted = tuple(drafts[:c - 1]) + (argmax[c - 1],)
    decisions = tuple(_decision(d, s, i <= c and d == a)
                      for i, (d, s, a) in enumerate(zip(drafts, scores, argmax), 1))
    return VerifyOutcome(emitted, c, decisions)


def spec_verify(drafts, scores, beta: int, tau: float) -> VerifyOutcome:
    """Relaxed verification: accept while the draft is top-beta and within tau of top-1.

    Both comparisons are non-strict. Tied log-probabilities share the better
    rank.
    """
    if beta < 1 or not tau >= 0:
        raise SpecDecError("BAD_HYPERPARAMS", f"beta={beta}, tau={tau}")
    drafts = _tokens(drafts)
    if len(drafts) != len(scores):
        raise SpecDecError("LENGTH_MISMATCH", f"{len(drafts)} drafts vs {len(scores)} scores")
    if not drafts:
        raise SpecDecError("LENGTH_MISMATCH", "empty block")
    decisions = []
    rejected_at = None
    for i, (d, s) in enumerate(zip(drafts, scores), 1):
        ok = False
        if rejected_at is None:
            lp = s.logprob(d)
            ok = lp >= s.kth_logprob(beta) and s.logprob(s.top1) - lp <= tau
            if not ok:
                rejected_at = i
        decisions.append(_decision(d, s, bool(ok)))
    if rejected_at is None:
        return VerifyOutcome(tuple(drafts), len(drafts), tuple(decisions))
    c = rejected_at
    emitted = tuple(drafts[:c - 1]) + (scores[c - 1].top1,)
    return VerifyOutcome(emitted, c, tuple(decisions))


def ar_greedy_decode(target, source, max_len: int, costs: CostModel = DEFAULT_COSTS) -> DecodeResult:
    if max_len < 1:
        raise SpecDecError("ZERO_MAX_LEN", f"max_len={max_len}", where="max_len")
    out = tuple(target.greedy_rollout(source, [], max_len))
    rec = IterationRecord(1, 1, 1, 0.0, costs.t_ar)
    return DecodeResult(out, (rec,) * len(out))


def ar_beam_decode(target, source, beam_width: int, max_len: int,
                   costs: CostModel = DEFAULT_COSTS) -> DecodeResult:
    """Length-normalized beam search (score = sum of logprobs / length).

    Returns the best finished hypothesis, or the best live one if none
    finished by ``max_len``. Ties go to the lexicographically smallest path.
    """
    if beam_width < 1:
        raise SpecDecError("NONPOSITIVE_BEAM_WIDTH", f"beam_width={beam_width}")
    if max_len < 1:
        raise SpecDecError("ZERO_MAX_LEN", f"max_len={max_len}", where="max_len")
    check_sequence(source, target.vocab_size, "source")
    live = [((), 0.0)]
    finished = []
    steps = 0
    while live and steps < max_len and len(finished) < beam_width:
        steps += 1
        cands = []
        for toks, total in live:
            lp = target.next_distribution(source, toks).logprobs
            for t in range(len(lp)):
                cands.append((toks + (t,), total + float(lp[t])))
        cands.sort(key=lambda c: (-c[1], c[0]))
        live = []
        for toks, total in cands[:beam_width]:
            if toks[-1] == EOS:
                finished.append((toks, total))
            else:
                live.append((toks, total))
        if len(live) < beam_width:
            # refill with the best continuing candidates below the cut
            for toks, total in cands[beam_width:]:
                if len(live) == beam_width:
                    break
                if toks[-1] != EOS:
                    live.append((toks, total))
    pool = finished or live
    best = min(pool, key=lambda c: (-c[1] / len(c[0]), c[0]))
    rec = IterationRecord(1, 1, 1, 0.0, costs.t_ar)
    return DecodeResult(best[0], (rec,) * len(best[0]))


def beam_score(target, source, tokens) -> float:
    """Length-normalized score of ``tokens`` as ar_beam_decode ranks it."""
    total = 0.0
    for j, t in enumerate(tokens):
        total += float(target.next_distribution(source, tokens[:j]).logprobs[t])
    return total / len(tokens)


def specdec_decode(target, drafter, source, cfg: DecodeConfig,
                   costs: CostModel = DEFAULT_COSTS) -> DecodeResult:
    if not cfg.strategy.is_speculative:
        raise SpecDecError("BAD_STRATEGY", f"{cfg.strategy.value} is not a speculative strategy",
                           where="strategy")
    validate_config(cfg, target.vocab_size)
    check_sequence(source, target.vocab_size, "source")
    k = cfg.k
    out: list = []
    records, trace = [], []
    while len(out) < cfg.max_len and not (out and out[-1] == EOS):
        block = drafter.draft(source, out, k)
        scores = target.score_positions_parallel(source, out, block)
        if cfg.strategy is Strategy.SPECDEC_VANILLA:
            outcome = vanilla_verify(block, scores)
        else:
            outcome = spec_verify(block, scores, cfg.beta, cfg.tau)
        emitted = list(outcome.emitted)
        if EOS in emitted:
            emitted = emitted[:emitted.index(EOS) + 1]
        emitted = emitted[:cfg.max_len - len(out)]
        out.extend(emitted)
        n = len(emitted)
        records.append(IterationRecord(k, n, n, costs.t_d, costs.t_v))
        trace.append(outcome)
    return DecodeResult(tuple(out), tuple(records), tuple(trace))


def decode(target, drafter, source, cfg: DecodeConfig,
           costs: CostModel = DEFAULT_COSTS) -> DecodeResult:
    """Dispatch on ``cfg.strategy``; ``drafter`` is ignored by AR strategies."""
    validate_config(cfg, target.vocab_size)
    if cfg.strategy is Strategy.AR_GREEDY:
        return ar_greedy_decode(target, source, cfg.max_len, costs)
    if cfg.strategy is Strategy.AR_BEAM:
        return ar_beam_decode(target, source, cfg.beam_width, cfg.max_len, costs)
    if drafter is None:
        raise SpecDecError("MISSING_DRAFTER", f"{cfg.strategy.value} needs a drafter",
                           where="drafter")
    return specdec_decode(target, drafter, source, cfg, costs)

