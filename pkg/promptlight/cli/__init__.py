"""
Command-line interface: train, infer, eval and analyze subcommands
"""

import argparse
from typing import List, Optional

import torch

from .. import __version__
from ..config import settings
from ..exceptions import handle_exception
from ..utils.logging import get_logger, setup_logging
from .commands import cmd_analyze, cmd_eval, cmd_infer, cmd_train

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptlight",
        description="Unsupervised backlit image enhancement with learned prompts",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Overrides PROMPTLIGHT_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--seed", type=int, default=None, help="Overrides the config seed")
        sub.add_argument("--device", default=None, help="torch device, e.g. cpu or cuda:0")

    train = subparsers.add_parser("train", help="Run both training stages")
    train.add_argument("--config", required=True, help="YAML run config")
    train.add_argument("--checkpoint", default=None, help="Resume from a training checkpoint")
    common(train)
    train.set_defaults(handler=cmd_train)

    infer = subparsers.add_parser("infer", help="Enhance a directory of images")
    infer.add_argument("--checkpoint", required=True, help="Enhancer or training checkpoint")
    infer.add_argument("--input", nargs=1, required=True, help="Directory of input images")
    infer.add_argument("--output", required=True, help="Directory for enhanced PNGs")
    infer.add_argument("--config", default=None, help="Check the checkpoint against this config")
    infer.add_argument(
        "--comparison", action="store_true", help="Also write input|output side-by-side PNGs"
    )
    common(infer)
    infer.set_defaults(handler=cmd_infer)

    evaluate = subparsers.add_parser("eval", help="PSNR/SSIM against reference images")
    evaluate.add_argument("--input", nargs=1, required=True, help="Directory of enhanced images")
    evaluate.add_argument("--reference", default=None, help="Directory of reference images")
    evaluate.add_argument("--output", required=True, help="Directory for report files")
    common(evaluate)
    evaluate.set_defaults(handler=cmd_eval)

    analyze = subparsers.add_parser("analyze", help="Prompt score distributions of image pools")
    analyze.add_argument("--checkpoint", required=True, help="Prompt or training checkpoint")
    analyze.add_argument("--input", nargs="+", required=True, help="One or more pool directories")
    analyze.add_argument("--output", required=True, help="Directory for statistics files")
    analyze.add_argument("--config", default=None, help="Run config naming the backbone")
    analyze.add_argument("--plot", action="store_true", help="Render a histogram PNG")
    analyze.add_argument(
        "--ramp", nargs="*", default=None, help="Images to score along an exposure ramp"
    )
    common(analyze)
    analyze.set_defaults(handler=cmd_analyze)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and map failures to exit codes"""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(level=args.log_level or settings.LOG_LEVEL, log_file=settings.LOG_FILE)
    if settings.NUM_THREADS:
        torch.set_num_threads(settings.NUM_THREADS)
    try:
        return args.handler(args)
    except Exception as exc:
        return handle_exception(exc)


__all__ = ["build_parser", "main"]
