"""Command line interface: run experiments, evaluate checkpoints, sweep landscapes.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.  The
``SYNODE_OUT`` environment variable, when set, is the root under which
relative ``output_dir`` paths are created.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, DataFormatError, DivergenceError, TrainingAbort
from .experiments import evaluate_checkpoint, landscape_sweep, load_config, run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synode",
        description="Train neural ODEs on time series with homotopy-scheduled "
        "synchronization coupling, and reproduce the packaged experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment described by a JSON config")
    run_p.add_argument("config", help="path to the experiment config")
    run_p.add_argument("--out-root", default=None, help="override the output root")

    eval_p = sub.add_parser("evaluate", help="evaluate a checkpoint against a dataset CSV")
    eval_p.add_argument("checkpoint", help="best.ckpt.json from a training run")
    eval_p.add_argument("dataset", help="dataset CSV (training window plus held-out tail)")
    eval_p.add_argument("--horizon", type=int, default=0, help="held-out points at the end")
    eval_p.add_argument("--substeps", type=int, default=10)

    sweep_p = sub.add_parser("sweep", help="loss-landscape sweep over one coefficient")
    sweep_p.add_argument("config", help="path to the sweep config")
    sweep_p.add_argument("--out-root", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            summary = run_experiment(args.config, output_root=args.out_root)
            json.dump(summary, sys.stdout, indent=2)
            print()
        elif args.command == "evaluate":
            metrics = evaluate_checkpoint(args.checkpoint, args.dataset, args.horizon, args.substeps)
            json.dump(metrics, sys.stdout, indent=2)
            print()
        elif args.command == "sweep":
            cfg = load_config(args.config)
            rows = landscape_sweep(cfg, output_root=args.out_root)
            print(f"wrote {len(rows)} sweep rows")
    except (ConfigError, DataFormatError) as err:
        print(f"synode: config error: {err}", file=sys.stderr)
        return 2
    except (DivergenceError, TrainingAbort, OSError) as err:
        print(f"synode: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
