"""Command line entry points: train, evaluate, sweep, verify."""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, oracle
from .errors import (CertificationError, ConfigError, NonConvergenceError,
                     TrainingAborted, UsageError)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="advrl",
        description="Robust soft actor-critic training, evaluation under "
                    "observation attacks, and exact tabular certification.")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="train one (config, seed) run")
    t.add_argument("--config", required=True, help="config file path")
    t.add_argument("--seed", type=int, required=True, help="master seed")
    t.add_argument("--out", default=None, help="override out_dir")

    e = sub.add_parser("evaluate", help="evaluate a checkpoint under attacks")
    e.add_argument("--ckpt", required=True, help="checkpoint json path")
    e.add_argument("--attack", action="append", required=True,
                   help="attack spec, repeatable (e.g. sofa:alpha=4,n=64)")
    e.add_argument("--episodes", type=int, default=20)
    e.add_argument("--env", default=None,
                   help="env id; defaults to config.json beside the checkpoint")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default=None,
                   help="eval csv path (default: eval.csv beside the checkpoint)")

    s = sub.add_parser("sweep", help="train+evaluate the seeds x attacks grid")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="override out_dir")

    v = sub.add_parser("verify", help="run the exact certification battery")
    v.add_argument("--trials", type=int, default=1000,
                   help="contraction trials per operator")
    v.add_argument("--quick", action="store_true",
                   help="small trial counts for a smoke run")
    v.add_argument("--seed", type=int, default=0)
    return parser


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _cmd_train(args):
    cfg = harness.load_config(args.config)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    result = harness.run_train(cfg, args.seed)
    print(json.dumps({"run_dir": str(result.run_dir),
                      "train_csv": str(result.train_csv),
                      "final_checkpoint": str(result.final_checkpoint),
                      "digest": result.digest,
                      "episodes": result.episodes}, indent=2))
    return 0


def _cmd_evaluate(args):
    ckpt = Path(args.ckpt)
    records = harness.run_eval(ckpt, args.attack, args.episodes, args.seed,
                               env_id=args.env)
    sibling = ckpt.parent / "config.json"
    algo = env_id = "unknown"
    digest = json.loads(ckpt.read_text()).get("run_config_digest", "unknown")
    if sibling.exists():
        meta = json.loads(sibling.read_text())["config"]
        algo, env_id = meta["algo"], meta["env"]
    if args.env is not None:
        env_id = args.env
    out = Path(args.out) if args.out else ckpt.parent / "eval.csv"
    harness.write_eval_csv(out, records, digest, algo, env_id)
    summary = [{"attack": rec.attack, "mean": rec.mean,
                "percentiles": rec.percentiles()} for rec in records]
    print(json.dumps({"eval_csv": str(out), "records": summary}, indent=2))
    return 0


def _cmd_sweep(args):
    cfg = harness.load_config(args.config)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    result = harness.run_sweep(cfg)
    print(json.dumps({"stats_csv": str(result["stats_csv"]),
                      "eval_csvs": [str(p) for p in result["eval_csvs"]],
                      "digest": result["digest"]}, indent=2))
    return 0


def _cmd_verify(args):
    reports = oracle.verification_battery(seed=args.seed, quick=args.quick,
                                          contraction_trials=args.trials)
    ok = all(r["pass"] for r in reports)
    print(json.dumps({"pass": ok, "reports": reports}, indent=2,
                     default=_json_default))
    return 0 if ok else 1


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    handler = {"train": _cmd_train, "evaluate": _cmd_evaluate,
               "sweep": _cmd_sweep, "verify": _cmd_verify}[args.cmd]
    try:
        return handler(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (TrainingAborted, NonConvergenceError, CertificationError) as e:
        print(f"aborted: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
