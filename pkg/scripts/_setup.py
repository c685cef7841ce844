"""Shared synthetic setup for the experiment scripts."""
import argparse

import numpy as np

from specdec import io
from specdec.bench import NoisyOracleFactory, SelfRolloutFactory
from specdec.core import CostModel
from specdec.models import perturbed_model, random_model


def add_common_args(p: argparse.ArgumentParser):
    p.add_argument("--vocab-size", type=int, default=40)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--concentration", type=float, default=0.3)
    p.add_argument("--no-eos", action="store_true", help="target never stops; fixes output length")
    p.add_argument("--drafter", choices=["noisy-oracle", "perturbed"], default="perturbed")
    p.add_argument("--p", type=float, default=0.3, help="corruption prob for the noisy oracle")
    p.add_argument("--noise", type=float, default=0.5, help="logprob noise for the perturbed drafter")
    p.add_argument("--sequences", type=int, default=100)
    p.add_argument("--max-len", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--costs", type=CostModel.parse, default=CostModel())
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write rows here as CSV")


def build(args):
    """(target, drafter factory, corpus) from the parsed flags."""
    target = random_model(args.vocab_size, args.order, args.concentration, args.seed,
                          allow_eos=not args.no_eos)
    if args.drafter == "noisy-oracle":
        factory = NoisyOracleFactory(args.p, args.seed)
    else:
        drafter = perturbed_model(target, args.noise, args.seed + 1)
        factory = SelfRolloutFactory(drafter, f"sha256:{io.model_hash(drafter)}")
    rng = np.random.default_rng(args.seed)
    corpus = []
    for _ in range(args.sequences):
        src = [int(t) for t in rng.integers(3, args.vocab_size, size=int(rng.integers(1, 6)))]
        corpus.append((src, [1]))  # references are unused; decoding is greedy-targeted
    return target, factory, corpus


def emit(rows, columns, out=None):
    print(",".join(columns))
    for r in rows:
        print(",".join(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in columns))
    if out:
        io.write_table(rows, out, columns)
