"""
Inference: enhance every image of a directory with a trained network
"""

import time
from pathlib import Path
from typing import Optional

import torch
from tqdm import tqdm

from ...exceptions import DataError
from ...infrastructure.image_store import (INFERENCE_LIMIT, decode_image,
                                           inference_resize, list_image_files,
                                           save_comparison, save_png)
from ...infrastructure.run_log import write_json
from ...utils.logging import get_logger
from ..enhancer import EnhancerNet, enhance
from ..entities import ImageTiming, InferenceSummary, SkippedItem

logger = get_logger(__name__)


class InferenceService:
    """Applies the resize rule and the enhancer to single images or directories"""

    def __init__(
        self,
        net: EnhancerNet,
        device: str = "cpu",
        resize_limit: int = INFERENCE_LIMIT,
        write_comparison: bool = False,
        show_progress: bool = False,
    ):
        self.device = torch.device(device)
        self.net = net.to(self.device).eval()
        self.net.requires_grad_(False)
        self.dtype = next(self.net.parameters()).dtype
        self.resize_limit = resize_limit
        self.write_comparison = write_comparison
        self.show_progress = show_progress

    def enhance_image(self, image: torch.Tensor) -> torch.Tensor:
        """(3, H, W) in [0, 1] -> enhanced (3, H', W') after the resize rule"""
        resized = inference_resize(image, self.resize_limit)
        with torch.no_grad():
            batch = resized.unsqueeze(0).to(device=self.device, dtype=self.dtype)
            return enhance(self.net, batch)[0].float().cpu()

    def enhance_directory(self, input_dir: str, output_dir: str) -> InferenceSummary:
        """Write one PNG per decodable input, mirroring file stems"""
        files = list_image_files(input_dir)
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary = InferenceSummary(input_dir=str(input_dir), output_dir=str(out))
        if not files:
            logger.warning(f"No PNG or JPEG images in {input_dir}; nothing to enhance")
            write_json(str(out / "timing.json"), summary.model_dump(mode="json"))
            return summary

        started = time.perf_counter()
        for path in tqdm(files, desc="infer", disable=not self.show_progress):
            try:
                image, has_icc = decode_image(str(path))
            except DataError as exc:
                logger.warning(f"Skipping {path.name}: {exc.detail}")
                summary.skipped.append(SkippedItem(name=path.name, reason=exc.detail))
                continue
            if has_icc:
                logger.warning(f"Ignoring ICC profile of {path.name}; treating it as sRGB")

            tick = time.perf_counter()
            enhanced = self.enhance_image(image)
            seconds = time.perf_counter() - tick

            target = out / f"{path.stem}.png"
            save_png(enhanced, str(target))
            if self.write_comparison:
                before = inference_resize(image, self.resize_limit)
                save_comparison(before, enhanced, str(out / "comparisons" / f"{path.stem}.png"))

            summary.outputs.append(str(target))
            summary.timings.append(
                ImageTiming(
                    name=path.name,
                    seconds=seconds,
                    height=int(enhanced.shape[-2]),
                    width=int(enhanced.shape[-1]),
                    resized=tuple(enhanced.shape[-2:]) != tuple(image.shape[-2:]),
                )
            )

        summary.total_seconds = time.perf_counter() - started
        write_json(
            str(out / "timing.json"),
            {**summary.model_dump(mode="json"), "mean_seconds": summary.mean_seconds},
        )
        logger.info(
            f"Enhanced {summary.count} images into {out} "
            f"(mean {summary.mean_seconds or 0.0:.3f}s per image, "
            f"{len(summary.skipped)} skipped)"
        )
        return summary
