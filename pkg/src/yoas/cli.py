"""Command-line front end.

Usage::

    yoas run-all --preset desk --seed 7 --out runs/demo
    yoas gen-corpus ... prepare ... clean ... train-gan ... train-diff ...
    yoas deduce ... synthesize ... evaluate ...

Exit codes: 0 success, 1 validation error (bad config, stage order), 2
unexpected runtime failure. ``YOAS_LOG`` selects the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .errors import YoasError
from . import pipeline


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="yoas",
        description="Dense-channel EEG synthesis from sparse reference channels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        ("gen-corpus", "synthesize the desk-scale corpus"),
        ("prepare", "regional division and bias extraction"),
        ("clean", "outlier removal, interpolation and multiscale denoising"),
        ("train-gan", "train per-edge adversarial bias generators"),
        ("train-diff", "train per-edge diffusion refiners"),
        ("deduce", "refine generation paths and merge divisions"),
        ("synthesize", "assemble dense channels for held-out segments"),
        ("evaluate", "metrics, classifiers and plots"),
        ("run-all", "run every stage in order"),
    ]
    for name, help_text in commands:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="TOML config overlay")
        p.add_argument("--preset", default="desk", choices=["desk", "paper"])
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="worker processes for edge training")
        p.add_argument("--force", action="store_true", help="re-run even when up to date")
        p.add_argument("--out", default="runs/out", help="run directory")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("YOAS_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.preset, args.config)
        paths = pipeline.RunPaths(args.out)
        stage_fns = {
            "gen-corpus": lambda: pipeline.stage_gen_corpus(cfg, paths, args.seed, args.force),
            "prepare": lambda: pipeline.stage_prepare(cfg, paths, args.seed, args.force),
            "clean": lambda: pipeline.stage_clean(cfg, paths, args.seed, args.force),
            "train-gan": lambda: pipeline.stage_train_gan(
                cfg, paths, args.seed, args.jobs, args.force
            ),
            "train-diff": lambda: pipeline.stage_train_diff(
                cfg, paths, args.seed, args.jobs, args.force
            ),
            "deduce": lambda: pipeline.stage_deduce(cfg, paths, args.seed, args.force),
            "synthesize": lambda: pipeline.stage_synthesize(cfg, paths, args.seed, args.force),
            "evaluate": lambda: pipeline.stage_evaluate(cfg, paths, args.seed, args.force),
            "run-all": lambda: pipeline.run_all(cfg, paths, args.seed, args.jobs, args.force),
        }
        stage_fns[args.command]()
        return 0
    except YoasError as exc:
        logging.getLogger("yoas").error("%s", exc)
        return 1
    except Exception:  # noqa: BLE001 - runtime failure boundary
        logging.getLogger("yoas").exception("unexpected failure")
        return 2


if __name__ == "__main__":
    sys.exit(main())
