"""Distribution of per-sequence modeled speedup over AR greedy decoding.

    python3 scripts/speedup_histogram.py --strategy specdec-relaxed --bucket-width 0.5
"""
import argparse

from _setup import add_common_args, build
from specdec import io
from specdec.bench import build_report, decode_corpus, greedy_baseline
from specdec.core import DecodeConfig, Strategy


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    add_common_args(p)
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--beta", type=int, default=3)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--strategy", choices=["specdec-vanilla", "specdec-relaxed"],
                   default="specdec-relaxed")
    p.add_argument("--bucket-width", type=float, default=0.5)
    args = p.parse_args()

    target, factory, corpus = build(args)
    cfg = DecodeConfig(k=args.k, beta=args.beta, tau=args.tau, max_len=args.max_len,
                       strategy=Strategy(args.strategy), seed=args.seed)
    base = greedy_baseline(target, corpus, cfg.max_len, args.costs, args.jobs)
    runs = decode_corpus(target, factory, corpus, cfg, args.costs, args.jobs)
    report = build_report(runs, base, cfg, args.costs, bucket_width=args.bucket_width)
    hist = report.histogram
    print(f"sequences={len(runs)} mean_tok={report.mean_tok:.4f} speedup={report.modeled_speedup:.4f} "
          f"divergence={report.divergence_rate:.4f}")
    width = max(hist.values())
    for label, count in hist.items():
        print(f"{label:>12} {count:5d} {'#' * round(40 * count / width)}")
    if args.out:
        io.write_table([{"bucket": k, "count": v} for k, v in hist.items()], args.out,
                       ["bucket", "count"])


if __name__ == "__main__":
    main()
