"""
Subcommand implementations; each returns a process exit code
"""

import argparse
from pathlib import Path
from typing import Optional

from ..config import RunConfig, load_run_config, settings
from ..core.entities import BackboneInfo
from ..exceptions import EXIT_OK, CheckpointMismatchError
from ..infrastructure.checkpoints import KIND_TRAINING, load_prompts, read_blob
from ..infrastructure.image_store import decode_image, load_pool
from ..infrastructure.run_log import write_json
from ..utils.logging import get_logger, run_log_sink, setup_logging
from .dependencies import (get_backend, get_evaluation_service,
                           get_inference_service, get_recorded_backend,
                           get_training_service)

logger = get_logger(__name__)


def _load_config(args: argparse.Namespace) -> Optional[RunConfig]:
    if not getattr(args, "config", None):
        return None
    return load_run_config(args.config, {"seed": args.seed, "device": args.device})


def _device(args: argparse.Namespace, config: Optional[RunConfig]) -> str:
    if args.device:
        return args.device
    return config.device if config else settings.DEVICE


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    setup_logging(level=args.log_level or config.log_level, log_file=settings.LOG_FILE)
    Path(config.paths.out_dir).mkdir(parents=True, exist_ok=True)
    with run_log_sink(str(Path(config.paths.out_dir) / "train.log"), level=config.log_level):
        service = get_training_service(config)
        if args.checkpoint:
            service.resume(args.checkpoint)
        record = service.run()
    logger.info(f"Final checkpoint: {record.training_path}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    config = _load_config(args)
    service = get_inference_service(
        args.checkpoint,
        device=_device(args, config),
        config=config,
        write_comparison=args.comparison,
    )
    service.enhance_directory(args.input[0], args.output)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    service = get_evaluation_service()
    report = service.evaluate(args.input[0], args.reference)
    paths = service.write_report(report, args.output)
    summary = f"{len(report.records)} images, {len(report.skipped)} skipped"
    if report.mean_psnr is not None:
        summary += f", mean PSNR {report.mean_psnr:.4f} dB, mean SSIM {report.mean_ssim:.4f}"
    logger.info(f"Evaluation: {summary} -> {paths['summary']}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _load_config(args)
    device = _device(args, config)
    payload = read_blob(args.checkpoint)
    if payload.get("kind") == KIND_TRAINING:
        payload = payload["prompts"]
    n_tokens = payload.get("n_tokens")
    if config is not None:
        backend = get_backend(config.backbone, device, n_tokens)
    else:
        recorded = payload.get("backbone") or {}
        if not recorded.get("model_name"):
            raise CheckpointMismatchError(
                "Checkpoint does not record its backbone; pass --config",
                path=args.checkpoint,
            )
        backend = get_recorded_backend(
            BackboneInfo(**recorded), device, n_tokens, path=args.checkpoint
        )
    prompts = load_prompts(args.checkpoint, backend)
    temperature = config.train.similarity_temperature if config else 1.0

    service = get_evaluation_service()
    stats = [
        service.score_distribution(
            backend,
            prompts,
            load_pool(directory),
            name=Path(directory).name,
            temperature=temperature,
        )
        for directory in args.input
    ]
    out = Path(args.output)
    write_json(
        str(out / "score_stats.json"), {item.pool: item.model_dump(mode="json") for item in stats}
    )
    if args.plot:
        service.plot_histograms(stats, str(out / "score_histogram.png"))
    for item in stats:
        logger.info(
            f"{item.pool}: n={item.count} mean y_hat {item.mean_y_hat:.4f} "
            f"quartiles {[round(q, 4) for q in item.quartiles]}"
        )

    if args.ramp:
        ramps = []
        for path in args.ramp:
            image, _ = decode_image(path)
            ramp = service.exposure_ramp(
                backend, prompts, image, name=Path(path).name, temperature=temperature
            )
            logger.info(f"Exposure ramp {ramp.name}: spearman {ramp.spearman:.3f}")
            ramps.append(ramp.model_dump(mode="json"))
        write_json(str(out / "exposure_ramps.json"), {"ramps": ramps})
    return EXIT_OK
