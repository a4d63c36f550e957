"""
Evaluation and diagnostics: full-reference metrics and prompt score statistics
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from ...exceptions import DataError, NothingToDoError, ValidationError
from ...infrastructure.image_store import ImagePool, decode_image, list_image_files
from ...infrastructure.run_log import write_json, write_jsonl
from ...utils.logging import get_logger
from ..entities import (EvalReport, ExposureRamp, ImageQuality, ScoreStats,
                        SkippedItem)
from ..interfaces import QualityMetric, VisionLanguageBackend
from ..metrics import MeanLuma, psnr, ssim
from ..prompting import PromptPair, y_hat

logger = get_logger(__name__)

HISTOGRAM_BINS = 20
DEFAULT_GAINS = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with averaged ranks for ties; 0 when either side is constant"""
    rx, ry = _ranks(np.asarray(x, dtype=np.float64)), _ranks(np.asarray(y, dtype=np.float64))
    if rx.std() == 0.0 or ry.std() == 0.0:
        return 0.0
    return float(np.clip(np.corrcoef(rx, ry)[0, 1], -1.0, 1.0))


def _ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    ranks[order] = np.arange(1, len(values) + 1, dtype=np.float64)
    for value in np.unique(values):
        tied = values == value
        ranks[tied] = ranks[tied].mean()
    return ranks


class EvaluationService:
    """Full-reference metrics against a reference directory, plus prompt diagnostics"""

    def __init__(self, metrics: Optional[List[QualityMetric]] = None):
        self.metrics = metrics if metrics is not None else [MeanLuma()]

    # ------------------------------------------------------------------
    # full-reference evaluation

    def _extra(self, enhanced: torch.Tensor, reference: Optional[torch.Tensor]) -> Dict[str, float]:
        return {
            metric.name: float(metric.compute(enhanced, reference))
            for metric in self.metrics
            if reference is not None or not metric.needs_reference
        }

    def evaluate(self, enhanced_dir: str, reference_dir: Optional[str] = None) -> EvalReport:
        """Score every enhanced image; references are matched by file stem"""
        report = EvalReport()
        references = {}
        if reference_dir is not None:
            references = {path.stem: path for path in list_image_files(reference_dir)}

        for path in list_image_files(enhanced_dir):
            name = path.stem
            try:
                enhanced, _ = decode_image(str(path))
            except DataError as exc:
                report.skipped.append(SkippedItem(name=name, reason=exc.detail))
                continue

            if reference_dir is None:
                report.records.append(ImageQuality(name=name, extra=self._extra(enhanced, None)))
                continue

            if name not in references:
                report.skipped.append(SkippedItem(name=name, reason="no reference image"))
                continue
            try:
                reference, _ = decode_image(str(references[name]))
            except DataError as exc:
                report.skipped.append(SkippedItem(name=name, reason=exc.detail))
                continue
            if reference.shape != enhanced.shape:
                report.skipped.append(
                    SkippedItem(
                        name=name,
                        reason=f"size mismatch {tuple(enhanced.shape)} vs {tuple(reference.shape)}",
                    )
                )
                continue
            try:
                ssim_value = ssim(enhanced, reference)
            except ValidationError as exc:
                report.skipped.append(SkippedItem(name=name, reason=exc.detail))
                continue
            report.records.append(
                ImageQuality(
                    name=name,
                    psnr=psnr(enhanced, reference),
                    ssim=ssim_value,
                    extra=self._extra(enhanced, reference),
                )
            )

        for item in report.skipped:
            logger.warning(f"Skipped {item.name}: {item.reason}")
        if not report.records:
            raise NothingToDoError(
                f"No image of {enhanced_dir} could be evaluated", skipped=len(report.skipped)
            )
        return report.aggregate()

    def write_report(self, report: EvalReport, out_dir: str) -> Dict[str, str]:
        """report.jsonl with one line per image or skip, summary.json with aggregates"""
        out = Path(out_dir)
        lines = [{"type": "image", **r.model_dump(mode="json")} for r in report.records]
        lines += [{"type": "skipped", **s.model_dump(mode="json")} for s in report.skipped]
        summary = {
            "count": len(report.records),
            "skipped": len(report.skipped),
            "mean_psnr": report.mean_psnr,
            "mean_ssim": report.mean_ssim,
            "mean_extra": report.mean_extra,
            "score_stats": {k: v.model_dump(mode="json") for k, v in report.score_stats.items()},
        }
        return {
            "report": write_jsonl(str(out / "report.jsonl"), lines),
            "summary": write_json(str(out / "summary.json"), summary),
        }

    # ------------------------------------------------------------------
    # prompt diagnostics

    @staticmethod
    def _positive_scores(
        backend: VisionLanguageBackend,
        prompts: PromptPair,
        images: Sequence[torch.Tensor],
        temperature: float,
    ) -> List[float]:
        with torch.no_grad():
            negative_emb, positive_emb = prompts.text_embeddings(backend)
            scores = []
            for image in images:
                batch = image.unsqueeze(0).to(device=backend.device, dtype=backend.dtype)
                image_emb = backend.encode_image(batch)
                scores.append(float(y_hat(image_emb, negative_emb, positive_emb, temperature)[0]))
        return scores

    def score_distribution(
        self,
        backend: VisionLanguageBackend,
        prompts: PromptPair,
        pool: ImagePool,
        name: Optional[str] = None,
        temperature: float = 1.0,
    ) -> ScoreStats:
        """Positive-prompt score of every image of a pool, summarized"""
        if len(pool) == 0:
            raise ValidationError("score_distribution needs a non-empty pool", field="pool")
        per_image = dict(
            zip(
                pool.ids,
                self._positive_scores(
                    backend, prompts, (pool.image(i) for i in pool.ids), temperature
                ),
            )
        )
        values = np.array(list(per_image.values()), dtype=np.float64)
        histogram, edges = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
        return ScoreStats(
            pool=name or (pool.kind.value if pool.kind else Path(pool.directory).name),
            count=len(values),
            mean_y_hat=float(values.mean()),
            mean_s=float((1.0 - values).mean()),
            std=float(values.std()),
            quartiles=[float(q) for q in np.percentile(values, [25, 50, 75])],
            histogram=[int(c) for c in histogram],
            bin_edges=[float(e) for e in edges],
            per_image=per_image,
        )

    def exposure_ramp(
        self,
        backend: VisionLanguageBackend,
        prompts: PromptPair,
        image: torch.Tensor,
        name: str = "image",
        gains: Sequence[float] = DEFAULT_GAINS,
        temperature: float = 1.0,
    ) -> ExposureRamp:
        """Scores of one image at several exposure gains and their rank correlation"""
        if len(gains) < 2:
            raise ValidationError("an exposure ramp needs at least two gains", field="gains")
        rendered = [(image * gain).clamp(0.0, 1.0) for gain in gains]
        scores = self._positive_scores(backend, prompts, rendered, temperature)
        return ExposureRamp(
            name=name, gains=list(gains), y_hat=scores, spearman=spearman(gains, scores)
        )

    @staticmethod
    def plot_histograms(stats: List[ScoreStats], path: str) -> str:
        """Overlayed positive-prompt score histograms, one per pool"""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        for item in stats:
            edges = np.asarray(item.bin_edges)
            ax.stairs(item.histogram, edges, label=f"{item.pool} (n={item.count})", fill=False)
        ax.set_xlabel("positive prompt score")
        ax.set_ylabel("images")
        ax.set_xlim(0.0, 1.0)
        ax.legend()
        ax.grid(alpha=0.3)
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        return path
