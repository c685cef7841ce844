"""``specdec`` command line.

Exit codes: 0 on success, 2 for invalid flags or configuration, 1 for file
and model problems.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import bench, io
from .core import CostModel, ConfigError, DecodeConfig, SpecDecError, Strategy, validate_config
from .models import fit_ngram, perturbed_model, random_model


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _costs(text: str) -> CostModel:
    try:
        return CostModel.parse(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_decode_flags(p, k_flag=True):
    p.add_argument("--target", required=True, help="target model file")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--drafter", help="drafter model file (self-rollout drafting)")
    g.add_argument("--noisy-oracle", type=float, metavar="P",
                   help="draft the target's greedy continuation, corrupting each token with prob P")
    p.add_argument("--input", required=True, help="corpus file: source<TAB>target per line")
    if k_flag:
        p.add_argument("--k", type=int, default=25)
    p.add_argument("--beta", type=int, default=3)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--costs", type=_costs, default=CostModel(), help="td,tv,tar (default 1,2,2)")
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specdec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="decode a corpus and write a report")
    _add_decode_flags(p)
    p.add_argument("--strategy", choices=[s.value for s in Strategy],
                   default=Strategy.SPECDEC_RELAXED.value)
    p.add_argument("--report", required=True)
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock latencies (reports are then not reproducible)")

    p = sub.add_parser("sweep-k", help="block-size sweep")
    _add_decode_flags(p, k_flag=False)
    p.add_argument("--k-list", type=_int_list, default=[5, 10, 15, 20, 25])
    p.add_argument("--strategy", choices=[Strategy.SPECDEC_VANILLA.value,
                                          Strategy.SPECDEC_RELAXED.value],
                   default=Strategy.SPECDEC_VANILLA.value)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-verify", help="beta x tau grid of relaxed verification")
    _add_decode_flags(p)
    p.add_argument("--beta-list", type=_int_list, default=[1, 3, 5])
    p.add_argument("--tau-list", type=_float_list, default=[0, 1, 2, 3, 4, 5])
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-model", help="write a random n-gram model")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--vocab-size", type=int)
    g.add_argument("--perturb-of", metavar="MODEL",
                   help="instead perturb an existing model's logprobs (drafter stand-in)")
    p.add_argument("--noise", type=float, default=0.5, help="std dev used with --perturb-of")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--concentration", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-eos", action="store_true", help="never predict EOS")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit an n-gram model to a corpus by counting")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--smoothing", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="greedy, beam, vanilla and relaxed on one corpus")
    _add_decode_flags(p)
    p.add_argument("--out", required=True)
    return parser


def _drafter_factory(args, target, strategy: Strategy):
    if args.noisy_oracle is not None:
        if not 0.0 <= args.noisy_oracle <= 1.0:
            raise ConfigError("BAD_CORRUPTION_PROB", f"{args.noisy_oracle}", where="--noisy-oracle")
        return bench.NoisyOracleFactory(args.noisy_oracle, args.seed)
    if args.drafter is not None:
        model = io.load_model(args.drafter)
        if model.vocab != target.vocab:
            raise SpecDecError("VOCAB_MISMATCH", "drafter and target vocabularies differ",
                               where="--drafter")
        return bench.SelfRolloutFactory(model, f"sha256:{io.model_hash(model)}")
    if strategy.is_speculative:
        raise ConfigError("MISSING_DRAFTER", "give --drafter or --noisy-oracle", where="--drafter")
    return None


def _setup(args, strategy: Strategy, k=None):
    cfg = DecodeConfig(k=args.k if k is None else k, beta=args.beta, tau=args.tau,
                       max_len=args.max_len, strategy=strategy,
                       beam_width=args.beam_width, seed=args.seed)
    if args.jobs < 1:
        raise ConfigError("BAD_JOBS", f"jobs={args.jobs}", where="--jobs")
    target = io.load_model(args.target)
    validate_config(cfg, target.vocab_size)
    factory = _drafter_factory(args, target, strategy)
    corpus = io.load_corpus(args.input, target.vocab)
    return cfg, target, factory, corpus


def cmd_run(args) -> int:
    cfg, target, factory, corpus = _setup(args, Strategy(args.strategy))
    prov = {"target": f"sha256:{io.model_hash(target)}",
            "drafter": getattr(factory, "ident", None), "input": str(args.input)}
    report = bench.run_corpus(target, factory, corpus, cfg, args.costs, jobs=args.jobs,
                              timing=args.timing, provenance=prov)
    io.write_report(report, args.report)
    print(f"tok={report.mean_tok:.6f} speedup={report.modeled_speedup:.6f}")
    return 0


def cmd_sweep_k(args) -> int:
    if not args.k_list:
        raise ConfigError("EMPTY_GRID", "--k-list is empty", where="--k-list")
    cfg, target, factory, corpus = _setup(args, Strategy(args.strategy), k=args.k_list[0])
    for k in args.k_list:
        validate_config(replace(cfg, k=k), target.vocab_size)
    rows = bench.sweep_block_size(target, factory, corpus, args.k_list, cfg, args.costs,
                                  jobs=args.jobs)
    io.write_table(rows, args.out, ["k", "tok", "speed"])
    for r in rows:
        print(f"k={r['k']} tok={r['tok']:.6f} speed={r['speed']:.6f}")
    return 0


def cmd_sweep_verify(args) -> int:
    if not args.beta_list or not args.tau_list:
        raise ConfigError("EMPTY_GRID", "beta and tau lists must be non-empty", where="--beta-list")
    cfg, target, factory, corpus = _setup(args, Strategy.SPECDEC_RELAXED)
    rows = bench.sweep_verification(target, factory, corpus, args.beta_list, args.tau_list, cfg,
                                    args.costs, jobs=args.jobs)
    io.write_table(rows, args.out, ["beta", "tau", "tok", "speed", "divergence"])
    for r in rows:
        print(f"beta={r['beta']} tau={r['tau']!r} tok={r['tok']:.6f} "
              f"divergence={r['divergence']:.6f}")
    return 0


def cmd_gen_model(args) -> int:
    if args.perturb_of is not None:
        if not args.noise >= 0:
            raise ConfigError("BAD_NOISE", f"{args.noise}", where="--noise")
        model = perturbed_model(io.load_model(args.perturb_of), args.noise, args.seed)
        io.save_model(model, args.out)
        print(f"model=sha256:{io.model_hash(model)}")
        return 0
    if args.vocab_size < 4:
        raise ConfigError("VOCAB_TOO_SMALL", f"{args.vocab_size}", where="--vocab-size")
    if args.order < 1:
        raise ConfigError("BAD_ORDER", f"{args.order}", where="--order")
    if not args.concentration > 0:
        raise ConfigError("BAD_CONCENTRATION", f"{args.concentration}", where="--concentration")
    model = random_model(args.vocab_size, args.order, args.concentration, args.seed,
                         allow_eos=not args.no_eos)
    io.save_model(model, args.out)
    print(f"model=sha256:{io.model_hash(model)}")
    return 0


def cmd_fit(args) -> int:
    if args.order < 1:
        raise ConfigError("BAD_ORDER", f"{args.order}", where="--order")
    if args.smoothing < 0:
        raise ConfigError("NEGATIVE_SMOOTHING", f"{args.smoothing}", where="--smoothing")
    if not io.count_examples(args.corpus):
        raise ConfigError("EMPTY_CORPUS", "corpus has no examples", where="--corpus")
    vocab = io.vocab_from_corpus(args.corpus)
    corpus = io.load_corpus(args.corpus, vocab)
    model = fit_ngram(corpus, args.order, args.smoothing, vocab)
    io.save_model(model, args.out)
    print(f"model=sha256:{io.model_hash(model)}")
    return 0


def cmd_compare(args) -> int:
    cfg, target, factory, corpus = _setup(args, Strategy.SPECDEC_RELAXED)
    if factory is None:
        raise ConfigError("MISSING_DRAFTER", "give --drafter or --noisy-oracle", where="--drafter")
    rows = bench.compare_strategies(target, factory, corpus, cfg, args.costs, jobs=args.jobs)
    io.write_table(rows, args.out, ["strategy", "tok", "speed", "divergence"])
    for r in rows:
        print(f"strategy={r['strategy']} tok={r['tok']:.6f} speedup={r['speed']:.6f} "
              f"divergence={r['divergence']:.6f}")
    return 0


COMMANDS = {"run": cmd_run, "sweep-k": cmd_sweep_k, "sweep-verify": cmd_sweep_verify,
            "gen-model": cmd_gen_model, "fit": cmd_fit, "compare": cmd_compare}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse: --help gives 0, usage errors 2
        return exc.code
    try:
        return COMMANDS[args.command](args)
    except SpecDecError as exc:
        print(f"specdec {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
