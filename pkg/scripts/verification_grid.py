"""Relaxed verification over a beta x tau grid (Tok., modeled speedup, divergence).

    python3 scripts/verification_grid.py --beta-list 1,3,5 --tau-list 0,1,2,3,4,5
"""
import argparse

from _setup import add_common_args, build, emit
from specdec.bench import sweep_verification
from specdec.core import DecodeConfig, Strategy


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    add_common_args(p)
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--beta-list", default="1,3,5")
    p.add_argument("--tau-list", default="0,1,2,3,4,5")
    args = p.parse_args()

    betas = [int(x) for x in args.beta_list.split(",")]
    taus = [float(x) for x in args.tau_list.split(",")]
    target, factory, corpus = build(args)
    cfg = DecodeConfig(k=args.k, max_len=args.max_len, strategy=Strategy.SPECDEC_RELAXED,
                       seed=args.seed)
    rows = sweep_verification(target, factory, corpus, betas, taus, cfg, args.costs,
                              jobs=args.jobs)
    emit(rows, ["beta", "tau", "tok", "speed", "divergence"], args.out)


if __name__ == "__main__":
    main()
