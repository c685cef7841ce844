"""Metrics, the latency model, and corpus-level sweeps.

Two latency notions are kept apart. *Modeled* latency sums simulated event
costs from a :class:`CostModel` and is reproducible anywhere. *Wall-clock*
latency is measured with ``time.perf_counter`` and only recorded on request,
since it would make reports non-reproducible.

Sums are taken with ``math.fsum`` so aggregates do not depend on the order in
which sequences finish.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import CostModel, DecodeConfig, IterationRecord, SpecDecError, Strategy, validate_config
from .decode import DEFAULT_COSTS, ar_greedy_decode, decode
from .models import NgramModel, NoisyOracleDrafter, SelfRolloutDrafter


def compute_tok(records) -> float:
    if not records:
        raise SpecDecError("EMPTY_RECORDS", "no iteration records")
    return math.fsum(r.emitted for r in records) / len(records)


def estimate_latency(L: int, tok: float, costs: CostModel) -> float:
    """Modeled latency of one sample: (L / tok) * t_d + (L / tok) * t_v."""
    if not tok > 0:
        raise SpecDecError("NONPOSITIVE_TOK", f"tok={tok}")
    if L < 1:
        raise SpecDecError("NONPOSITIVE_LENGTH", f"L={L}")
    iterations = L / tok
    return iterations * costs.t_d + iterations * costs.t_v


def expected_accept_noisy_oracle(k: int, p: float) -> float:
    """Expected tokens per vanilla iteration when each draft position is
    corrupted independently with probability ``p``.

    The iteration emits min(first corrupted position, k) tokens.
    """
    if k < 1 or not 0.0 <= p <= 1.0:
        raise SpecDecError("BAD_HYPERPARAMS", f"k={k}, p={p}")
    q = 1.0 - p
    return math.fsum(i * p * q ** (i - 1) for i in range(1, k)) + k * q ** (k - 1)


def modeled_latency(records) -> float:
    return math.fsum(r.draft_cost + r.verify_cost for r in records)


def verified_emitted(results) -> list:
    """Per-iteration emitted counts straight from verification, before any
    EOS or max_len truncation. These are the i.i.d. samples the analytic
    noisy-oracle expectation describes."""
    return [len(o.emitted) for r in results for o in r.trace]


# -- drafter factories: picklable, one fresh drafter per sequence -------------

@dataclass(frozen=True)
class NoisyOracleFactory:
    p: float
    seed: int = 0

    def __call__(self, target: NgramModel, index: int) -> NoisyOracleDrafter:
        return NoisyOracleDrafter.seeded(target, self.p, self.seed, index)

    @property
    def ident(self) -> str:
        return f"noisy-oracle:p={self.p!r}"


@dataclass(frozen=True)
class SelfRolloutFactory:
    model: NgramModel
    ident: str = "self-rollout"

    def __call__(self, target: NgramModel, index: int) -> SelfRolloutDrafter:
        return SelfRolloutDrafter(self.model)


# -- reports ------------------------------------------------------------------

@dataclass
class SequenceReport:
    index: int
    output: list
    length: int
    tok: float
    modeled_latency: float
    iterations: list
    diverged: bool = False
    wall_clock: Optional[float] = None

    def to_dict(self) -> dict:
        return {"index": self.index, "output": list(self.output), "length": self.length,
                "tok": self.tok, "modeled_latency": self.modeled_latency,
                "diverged": self.diverged, "wall_clock": self.wall_clock,
                "iterations": [r.to_dict() for r in self.iterations]}

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceReport":
        d = dict(d)
        d["iterations"] = [IterationRecord(**r) for r in d["iterations"]]
        return cls(**d)


@dataclass
class RunReport:
    sequences: list
    mean_tok: float
    modeled_speedup: float
    divergence_rate: float
    histogram: dict
    provenance: dict = field(default_factory=dict)
    wall_clock_speedup: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "aggregate": {"mean_tok": self.mean_tok, "modeled_speedup": self.modeled_speedup,
                          "wall_clock_speedup": self.wall_clock_speedup,
                          "divergence_rate": self.divergence_rate,
                          "speedup_histogram": self.histogram},
            "sequences": [s.to_dict() for s in self.sequences],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        agg = d["aggregate"]
        return cls(sequences=[SequenceReport.from_dict(s) for s in d["sequences"]],
                   mean_tok=agg["mean_tok"], modeled_speedup=agg["modeled_speedup"],
                   divergence_rate=agg["divergence_rate"],
                   histogram=dict(agg["speedup_histogram"]), provenance=d["provenance"],
                   wall_clock_speedup=agg["wall_clock_speedup"])

    @property
    def latencies(self) -> list:
        return [s.modeled_latency for s in self.sequences]


# -- corpus runs --------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(state):
    _WORKER.update(state)


def _decode_one(index: int):
    s = _WORKER
    source = s["corpus"][index][0]
    drafter = s["factory"](s["target"], index) if s["factory"] is not None else None
    t0 = time.perf_counter()
    result = decode(s["target"], drafter, source, s["cfg"], s["costs"])
    elapsed = time.perf_counter() - t0
    return result, elapsed


def decode_corpus(target, drafter_factory, corpus, cfg: DecodeConfig,
                  costs: CostModel = DEFAULT_COSTS, jobs: int = 1) -> list:
    """Decode the source side of every corpus pair.

    Returns ``(DecodeResult, seconds)`` pairs in corpus order. Sequence i uses
    random stream i, so the results do not depend on ``jobs``.
    """
    validate_config(cfg, target.vocab_size)
    state = {"target": target, "factory": drafter_factory, "corpus": list(corpus),
             "cfg": cfg, "costs": costs}
    n = len(state["corpus"])
    if jobs <= 1 or n <= 1:
        _WORKER.clear()
        _init_worker(state)
        try:
            return [_decode_one(i) for i in range(n)]
        finally:
            _WORKER.clear()
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(state,)) as pool:
        return list(pool.map(_decode_one, range(n), chunksize=max(1, n // (4 * jobs))))


def greedy_baseline(target, corpus, max_len: int, costs: CostModel = DEFAULT_COSTS,
                    jobs: int = 1) -> list:
    cfg = DecodeConfig(max_len=max_len, strategy=Strategy.AR_GREEDY, beta=1)
    return decode_corpus(target, None, corpus, cfg, costs, jobs)


def bucket_label(lo: float, width: float) -> str:
    return f"[{round(lo, 10)!r},{round(lo + width, 10)!r})"


def _bucketize(speedups, bucket_width: float) -> dict:
    if not bucket_width > 0:
        raise SpecDecError("BAD_BUCKET_WIDTH", f"bucket_width={bucket_width}")
    counts: dict = {}
    for s in speedups:
        idx = math.floor(s / bucket_width + 1e-9)
        counts[idx] = counts.get(idx, 0) + 1
    return {bucket_label(i * bucket_width, bucket_width): counts[i] for i in sorted(counts)}


def speedup_histogram(report: RunReport, baseline: RunReport, bucket_width: float = 0.5) -> dict:
    """Per-sequence modeled speedup (baseline latency / report latency), bucketed.

    Keys are ``"[lo,hi)"`` labels in ascending order; empty buckets are left out.
    """
    if len(report.sequences) != len(baseline.sequences) or any(
            a.index != b.index for a, b in zip(report.sequences, baseline.sequences)):
        raise SpecDecError("CORPUS_MISMATCH", "reports cover different sequences")
    speedups = [b.modeled_latency / a.modeled_latency
                for a, b in zip(report.sequences, baseline.sequences)]
    return _bucketize(speedups, bucket_width)


def build_report(runs, baseline_runs, cfg: DecodeConfig, costs: CostModel,
                 provenance: Optional[dict] = None, timing: bool = False,
                 bucket_width: float = 0.5) -> RunReport:
    """Assemble a RunReport from ``decode_corpus`` output and the AR-greedy baseline."""
    if len(runs) != len(baseline_runs):
        raise SpecDecError("CORPUS_MISMATCH", "run and baseline differ in length")
    seqs = []
    for i, ((res, secs), (base, _)) in enumerate(zip(runs, baseline_runs)):
        seqs.append(SequenceReport(
            index=i, output=list(res.output), length=len(res.output),
            tok=len(res.output) / len(res.iterations),
            modeled_latency=modeled_latency(res.iterations),
            iterations=list(res.iterations),
            diverged=res.output != base.output,
            wall_clock=secs if timing else None))
    total_emitted = math.fsum(s.length for s in seqs)
    total_iters = sum(len(s.iterations) for s in seqs)
    ar_latency = math.fsum(modeled_latency(b.iterations) for b, _ in baseline_runs)
    run_latency = math.fsum(s.modeled_latency for s in seqs)
    speedups = [modeled_latency(b.iterations) / s.modeled_latency
                for s, (b, _) in zip(seqs, baseline_runs)]
    wall = None
    if timing:
        wall = math.fsum(t for _, t in baseline_runs) / max(math.fsum(t for _, t in runs), 1e-12)
    prov = {"seed": cfg.seed, "config": cfg.to_dict(),
            "costs": {"t_d": costs.t_d, "t_v": costs.t_v, "t_ar": costs.t_ar},
            "summation": "math.fsum (exactly rounded, order independent)"}
    prov.update(provenance or {})
    return RunReport(
        sequences=seqs,
        mean_tok=total_emitted / total_iters if total_iters else 0.0,
        modeled_speedup=ar_latency / run_latency if run_latency else 0.0,
        divergence_rate=sum(s.diverged for s in seqs) / len(seqs) if seqs else 0.0,
        histogram=_bucketize(speedups, bucket_width),
        provenance=prov,
        wall_clock_speedup=wall)


def run_corpus(target, drafter_factory, corpus, cfg: DecodeConfig,
               costs: CostModel = DEFAULT_COSTS, jobs: int = 1, timing: bool = False,
               provenance: Optional[dict] = None, baseline=None) -> RunReport:
    baseline = baseline or greedy_baseline(target, corpus, cfg.max_len, costs, jobs)
    runs = decode_corpus(target, drafter_factory, corpus, cfg, costs, jobs)
    return build_report(runs, baseline, cfg, costs, provenance, timing)


def _aggregate(runs, baseline_runs) -> tuple:
    """(mean tok, modeled speedup, divergence rate) of a corpus run."""
    emitted = sum(len(r.output) for r, _ in runs)
    iters = sum(len(r.iterations) for r, _ in runs)
    ar = math.fsum(modeled_latency(b.iterations) for b, _ in baseline_runs)
    spec = math.fsum(modeled_latency(r.iterations) for r, _ in runs)
    div = sum(r.output != b.output for (r, _), (b, _) in zip(runs, baseline_runs))
    return emitted / iters, ar / spec, div / len(runs)


def sweep_block_size(target, drafter_factory, corpus, k_values, cfg: DecodeConfig,
                     costs: CostModel = DEFAULT_COSTS, jobs: int = 1) -> list:
    """One corpus run per block size; rows of ``{"k", "tok", "speed"}``."""
    k_values = list(k_values)
    if not k_values:
        raise SpecDecError("EMPTY_GRID", "k_values is empty", where="k_values")
    baseline = greedy_baseline(target, corpus, cfg.max_len, costs, jobs)
    rows = []
    for k in k_values:
        runs = decode_corpus(target, drafter_factory, corpus, replace(cfg, k=k), costs, jobs)
        tok, speed, _ = _aggregate(runs, baseline)
        rows.append({"k": k, "tok": tok, "speed": speed})
    return rows


def sweep_verification(target, drafter_factory, corpus, beta_values, tau_values,
                       cfg: DecodeConfig, costs: CostModel = DEFAULT_COSTS,
                       jobs: int = 1) -> list:
    """Relaxed verification over a beta x tau grid.

    Rows ``{"beta", "tau", "tok", "speed", "divergence"}`` in beta-major
    order; divergence is the fraction of outputs that differ from AR greedy.
    """
    beta_values, tau_values = list(beta_values), list(tau_values)
    if not beta_values or not tau_values:
        raise SpecDecError("EMPTY_GRID", "beta and tau grids must be non-empty")
    base_cfg = replace(cfg, strategy=Strategy.SPECDEC_RELAXED)
    for b in beta_values:
        for t in tau_values:
            validate_config(replace(base_cfg, beta=b, tau=t), target.vocab_size)
    baseline = greedy_baseline(target, corpus, cfg.max_len, costs, jobs)
    rows = []
    for b in beta_values:
        for t in tau_values:
            runs = decode_corpus(target, drafter_factory, corpus,
                                 replace(base_cfg, beta=b, tau=t), costs, jobs)
            tok, speed, div = _aggregate(runs, baseline)
            rows.append({"beta": b, "tau": t, "tok": tok, "speed": speed, "divergence": div})
    return rows


def compare_strategies(target, drafter_factory, corpus, cfg: DecodeConfig,
                       costs: CostModel = DEFAULT_COSTS, jobs: int = 1) -> list:
    """AR greedy, AR beam, vanilla and relaxed SpecDec on one corpus."""
    baseline = greedy_baseline(target, corpus, cfg.max_len, costs, jobs)
    rows = []
    for strategy in Strategy:
        if strategy is Strategy.AR_GREEDY:
            runs = baseline
        else:
            runs = decode_corpus(target, drafter_factory, corpus,
                                 replace(cfg, strategy=strategy), costs, jobs)
        tok, speed, div = _aggregate(runs, baseline)
        rows.append({"strategy": strategy.value, "tok": tok, "speed": speed, "divergence": div})
    return rows
