"""Command-line entry point: ``fnqs {train,evaluate,chi-sweep,oracle,verify}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, RunConfig

log = logging.getLogger("fnqs")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fnqs", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("train", "optimize a model on the configured ensemble"),
                        ("evaluate", "estimate observables of a trained model"),
                        ("chi-sweep", "fidelity-susceptibility sweep of a trained model"),
                        ("oracle", "exact reference values")):
        s = sub.add_parser(verb, help=help_)
        s.add_argument("config", help="run configuration (JSON)")
        s.add_argument("-o", "--output-dir", help="override output_dir")
        s.add_argument("--seed", type=int, help="override the run and sampler seeds")
        s.add_argument("-j", "--workers", type=int, default=1,
                       help="worker threads for independent oracle solves")
        if verb in ("evaluate", "chi-sweep"):
            s.add_argument("--checkpoint", help="checkpoint directory (default: <output_dir>/checkpoint)")
        if verb == "train":
            s.add_argument("--fresh", action="store_true", help="ignore an existing checkpoint")
    sub.add_parser("verify", help="run the exact-solver cross-checks")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    if args.verb == "verify":
        from .verify import oracle_checks

        results = oracle_checks()
        for r in results:
            print(f"{'PASS' if r['ok'] else 'FAIL'}  {r['name']}  ({r['detail']})")
        return 0 if all(r["ok"] for r in results) else 1

    from . import runner

    try:
        cfg = RunConfig.load(args.config).with_overrides(
            seed=args.seed, output_dir=args.output_dir, mode=args.verb)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.verb == "train":
        def progress(rec):
            log.info("step %d loss %.8g |dtheta| %.3g (%.2fs)", rec.step, rec.loss,
                     rec.dtheta_norm, rec.wall_time)

        path = runner.train(cfg, resume=not args.fresh, log=progress)
    elif args.verb == "evaluate":
        path = runner.evaluate(cfg, checkpoint=args.checkpoint)
    elif args.verb == "chi-sweep":
        path = runner.chi_sweep(cfg, checkpoint=args.checkpoint)
    else:
        path = runner.oracle(cfg, workers=args.workers)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
