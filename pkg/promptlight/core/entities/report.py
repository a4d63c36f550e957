"""
Evaluation report entities
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ImageQuality(BaseModel):
    """Full-reference scores of one enhanced image"""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {"name": "0001", "psnr": 21.58, "ssim": 0.883, "extra": {}}
        }
    )

    name: str = Field(..., description="Image stem shared by enhanced and reference files")
    psnr: Optional[float] = Field(default=None, description="Peak signal-to-noise ratio in dB")
    ssim: Optional[float] = Field(default=None, ge=-1.0, le=1.0)
    extra: Dict[str, float] = Field(default_factory=dict, description="plugin metrics")


class SkippedItem(BaseModel):
    """An input that could not be evaluated"""

    name: str
    reason: str


class ScoreStats(BaseModel):
    """Distribution of prompt similarity scores over one image pool"""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "pool": "backlit",
                "count": 2,
                "mean_y_hat": 0.31,
                "mean_s": 0.69,
                "std": 0.04,
                "quartiles": [0.28, 0.31, 0.34],
                "histogram": [0] * 20,
            }
        }
    )

    pool: str
    count: int = Field(..., ge=1)
    mean_y_hat: float = Field(..., description="mean positive-prompt score")
    mean_s: float = Field(..., description="mean negative-prompt score")
    std: float
    quartiles: List[float] = Field(..., min_length=3, max_length=3)
    histogram: List[int] = Field(..., description="20 bins over [0, 1] of y_hat")
    bin_edges: List[float] = Field(default_factory=list)
    per_image: Dict[str, float] = Field(default_factory=dict)


class EvalReport(BaseModel):
    """Per-image metrics plus aggregates"""

    records: List[ImageQuality] = Field(default_factory=list)
    skipped: List[SkippedItem] = Field(default_factory=list)
    mean_psnr: Optional[float] = None
    mean_ssim: Optional[float] = None
    mean_extra: Dict[str, float] = Field(default_factory=dict)
    score_stats: Dict[str, ScoreStats] = Field(default_factory=dict)

    def aggregate(self) -> "EvalReport":
        if self.records:
            referenced = [r for r in self.records if r.psnr is not None]
            if referenced:
                self.mean_psnr = sum(r.psnr for r in referenced) / len(referenced)
                self.mean_ssim = sum(r.ssim for r in referenced) / len(referenced)
            names = set().union(*(r.extra.keys() for r in self.records))
            self.mean_extra = {
                name: sum(r.extra[name] for r in self.records if name in r.extra)
                / sum(1 for r in self.records if name in r.extra)
                for name in sorted(names)
            }
        return self


class ImageTiming(BaseModel):
    """Wall time spent enhancing one image"""

    name: str
    seconds: float = Field(..., ge=0.0)
    height: int
    width: int
    resized: bool = False


class InferenceSummary(BaseModel):
    """What one inference pass over a directory produced"""

    input_dir: str
    output_dir: str
    outputs: List[str] = Field(default_factory=list)
    skipped: List[SkippedItem] = Field(default_factory=list)
    timings: List[ImageTiming] = Field(default_factory=list)
    total_seconds: float = 0.0

    @property
    def count(self) -> int:
        return len(self.outputs)

    @property
    def mean_seconds(self) -> Optional[float]:
        if not self.timings:
            return None
        return sum(t.seconds for t in self.timings) / len(self.timings)


class ExposureRamp(BaseModel):
    """Prompt scores of one image rendered at increasing exposure gains"""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "name": "0001.png",
                "gains": [0.25, 0.5, 1.0],
                "y_hat": [0.12, 0.35, 0.71],
                "spearman": 1.0,
            }
        }
    )

    name: str
    gains: List[float]
    y_hat: List[float]
    spearman: float = Field(..., ge=-1.0, le=1.0)
