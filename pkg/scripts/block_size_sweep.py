"""Mean accepted tokens and modeled speedup as the block size k grows.

    python3 scripts/block_size_sweep.py --k-list 2,4,6,8,10,15,20,25 --drafter noisy-oracle --p 0.2
"""
import argparse

from _setup import add_common_args, build, emit
from specdec.bench import expected_accept_noisy_oracle, sweep_block_size
from specdec.core import DecodeConfig, Strategy


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    add_common_args(p)
    p.add_argument("--k-list", default="2,3,4,5,6,8,10,15,20,25")
    p.add_argument("--strategy", choices=["specdec-vanilla", "specdec-relaxed"],
                   default="specdec-vanilla")
    p.add_argument("--beta", type=int, default=3)
    p.add_argument("--tau", type=float, default=1.0)
    args = p.parse_args()

    ks = [int(x) for x in args.k_list.split(",")]
    target, factory, corpus = build(args)
    cfg = DecodeConfig(k=ks[0], beta=args.beta, tau=args.tau, max_len=args.max_len,
                       strategy=Strategy(args.strategy), seed=args.seed)
    rows = sweep_block_size(target, factory, corpus, ks, cfg, args.costs, jobs=args.jobs)
    columns = ["k", "tok", "speed"]
    if args.drafter == "noisy-oracle" and args.strategy == "specdec-vanilla":
        for r in rows:  # the first-iteration expectation; EOS and max_len pull real values down
            r["expected"] = expected_accept_noisy_oracle(r["k"], args.p)
        columns.append("expected")
    emit(rows, columns, args.out)


if __name__ == "__main__":
    main()
