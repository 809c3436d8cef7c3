"""Command-line entry point: ``pbd <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from typing import List, Optional

import numpy as np

from . import jsonio
from .core import canonicalize, load_model, read_samples, sample, save_model, write_samples
from .corpus import KINDS, corpus_model, random_model
from .learner import LearnConfig, LearnerExhausted, proper_learn
from .oracle import chebyshev_pair, tv_exact
from .structure import sparsify


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(message)


def _epsilon(text: str) -> float:
    eps = float(text)
    if not 0.0 < eps < 0.5:
        raise argparse.ArgumentTypeError("epsilon must lie in (0, 0.5)")
    return eps


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("PBD_THREADS")
    if env:
        try:
            return _positive(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"PBD_THREADS must be a positive integer, got {env!r}")
    return 1


def _emit(obj, out: Optional[str]) -> None:
    text = jsonio.dumps(obj)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_gen(args) -> int:
    if args.params:
        model = canonicalize([float(t) for t in args.params.split(",")])
    else:
        if args.n is None:
            raise UsageError("gen needs --n or --params")
        model = random_model(args.n, args.seed, args.kind)
    _emit(model.to_dict(), args.out)
    return 0


def cmd_sample(args) -> int:
    model = load_model(args.model)
    samples = sample(model, args.count, args.seed)
    if args.out:
        write_samples(samples, args.out)
    else:
        sys.stdout.write("\n".join(str(int(v)) for v in samples.values) + "\n")
    return 0


def cmd_learn(args) -> int:
    samples = read_samples(args.samples)
    config = LearnConfig(eps=args.epsilon, C=args.constant_c, seed=args.seed,
                         max_systems=args.max_systems, threads=_threads(args),
                         time_budget=args.time_budget)
    report = proper_learn(samples, args.n, config)
    if args.out:
        save_model(report.output, args.out)
    _emit(report.to_dict(), args.report)
    return 0


def cmd_sparsify(args) -> int:
    model = load_model(args.model)
    res = sparsify(model, args.epsilon, seed=args.seed)
    if args.out:
        save_model(res.model, args.out)
    meta = res.metadata()
    meta["tv_exact"] = tv_exact(model, res.model)
    _emit(meta, None)
    return 0


def cmd_tv(args) -> int:
    a, b = load_model(args.first), load_model(args.second)
    if a.n != b.n:
        raise UsageError(f"models have different n ({a.n} vs {b.n})")
    print(format(tv_exact(a, b), ".17g"))
    return 0


def cmd_demo_lowerbound(args) -> int:
    _emit(chebyshev_pair(args.n).to_dict(), args.out)
    return 0


BENCH_COLUMNS = ["seed", "n", "eps", "regime", "systemsTried", "tv", "wallTime"]


def cmd_bench(args) -> int:
    seeds = range(args.seed, args.seed + args.count)
    streams = np.random.SeedSequence(args.seed).spawn(args.count)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(BENCH_COLUMNS)
        for seed, ss in zip(seeds, streams):
            model = corpus_model(seed)
            sample_seed, learn_seed = (int(s) for s in ss.generate_state(2))
            config = LearnConfig(eps=args.epsilon, C=args.constant_c, seed=learn_seed,
                                 max_systems=args.max_systems, threads=_threads(args),
                                 time_budget=args.time_budget)
            samples = sample(model, config.budget, sample_seed)
            t0 = time.perf_counter()
            try:
                report = proper_learn(samples, model.n, config)
                regime, tried = report.regime, report.systems_tried
                tv = format(tv_exact(model, report.output), ".17g")
            except LearnerExhausted as exc:
                regime, tried, tv = "exhausted", exc.diagnostics["systems_tried"], ""
            wall = format(time.perf_counter() - t0, ".6f")
            writer.writerow([seed, model.n, args.epsilon, regime, tried, tv, wall])
            out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pbd", description="Learn Poisson binomial distributions.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--epsilon", type=_epsilon, default=0.1)
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=_positive, default=None)
        return p

    p = common(sub.add_parser("gen", help="write a random or explicit model"))
    p.add_argument("--n", type=_positive)
    p.add_argument("--kind", choices=KINDS, default="uniform")
    p.add_argument("--params", help="comma-separated parameter list")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = common(sub.add_parser("sample", help="draw samples from a model"))
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=_positive, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = common(sub.add_parser("learn", help="learn a model from samples"))
    p.add_argument("--samples", required=True)
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--constant-c", type=float, default=10.0)
    p.add_argument("--max-systems", type=_positive, default=10 ** 6)
    p.add_argument("--time-budget", type=float, default=None)
    p.add_argument("--out", help="learned model JSON")
    p.add_argument("--report", help="report JSON (default: stdout)")
    p.set_defaults(func=cmd_learn)

    p = common(sub.add_parser("sparsify", help="reduce the number of distinct parameters"))
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sparsify)

    p = common(sub.add_parser("tv", help="exact total variation between two models"), seed=False)
    p.add_argument("first")
    p.add_argument("second")
    p.set_defaults(func=cmd_tv)

    p = common(sub.add_parser("demo-lowerbound", help="cosine-pair lower-bound report"), seed=False)
    p.add_argument("--n", type=_positive, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_demo_lowerbound)

    p = common(sub.add_parser("bench", help="learn the seeded corpus and write CSV"))
    p.add_argument("--count", type=_positive, default=50)
    p.add_argument("--constant-c", type=float, default=10.0)
    p.add_argument("--max-systems", type=_positive, default=10 ** 6)
    p.add_argument("--time-budget", type=float, default=60.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench, seed=1)
    return parser


def _fail(code: int, kind: str, message: str, **extra) -> int:
    payload = {"error": kind, "message": message}
    payload.update(extra)
    sys.stderr.write(jsonio.dumps(payload) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(1, "usage", str(exc))
    try:
        _threads(args)
        return args.func(args)
    except LearnerExhausted as exc:
        return _fail(2, "learner_exhausted", str(exc), diagnostics=exc.diagnostics)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        return _fail(1, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
