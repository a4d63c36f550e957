"""
Training domain entities
"""

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .enums import IdentityPhase, Stage
from .prompt import Margins

LAYER_COUNT = 5


class IdentityWeights(BaseModel):
    """Per-layer weights of the feature identity loss"""

    model_config = ConfigDict(frozen=True)

    alpha: Tuple[float, float, float, float, float]
    phase: IdentityPhase

    @classmethod
    def for_phase(cls, phase: IdentityPhase) -> "IdentityWeights":
        if phase == IdentityPhase.SELF_RECONSTRUCTION:
            return cls(alpha=(1.0, 1.0, 1.0, 1.0, 1.0), phase=phase)
        # the deepest layer carries color, which the enhancer is meant to change
        return cls(alpha=(1.0, 1.0, 1.0, 1.0, 0.5), phase=phase)

    def scaled(self, factor: float) -> "IdentityWeights":
        return IdentityWeights(
            alpha=tuple(a * factor for a in self.alpha), phase=self.phase
        )


class LossWeights(BaseModel):
    """Balance between the prompt-similarity and identity terms"""

    model_config = ConfigDict(frozen=True)

    w: float = Field(default=0.9, ge=0.0, le=1.0, description="0 disables the identity term")


class TrainConfig(BaseModel):
    """Hyperparameters of the two-stage alternating optimization"""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "total_iters": 50000,
                "self_recon_iters": 1000,
                "prompt_init_iters": 10000,
                "stage_cap": 1000,
            }
        },
    )

    total_iters: int = Field(default=50000, ge=0)
    self_recon_iters: int = Field(default=1000, ge=0)
    prompt_init_iters: int = Field(default=10000, ge=0)
    stage_cap: int = Field(default=1000, ge=1, description="iterations per alternation stage")
    refinement_rounds: Optional[int] = Field(
        default=None,
        ge=0,
        description="stop after this many refinement rounds (None: run to total_iters)",
    )

    lr_prompt: float = Field(default=5e-6, gt=0.0)
    lr_net: float = Field(default=2e-5, gt=0.0)
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.99, ge=0.0, lt=1.0)

    batch_prompt: int = Field(default=8, ge=1)
    batch_net: int = Field(default=16, ge=1)
    resize_size: int = Field(default=512, ge=16, description="square resize before augmentation")
    crop_size: int = Field(default=512, ge=16)
    zoom_range: Tuple[float, float] = Field(default=(0.8, 1.0))
    flip_prob: float = Field(default=0.5, ge=0.0, le=1.0)

    thr_A: Optional[float] = Field(
        default=None, description="prompt-phase loss threshold (batch-mean units)"
    )
    thr_B: Optional[float] = Field(
        default=None, description="enhancement-phase loss threshold (batch-mean units)"
    )
    threshold_window: int = Field(default=50, ge=1)

    margins: Margins = Field(default_factory=Margins)
    use_previous_outputs: bool = Field(
        default=True,
        description="rank against the previous round's outputs from round 2 on; false keeps the three-hinge loss",
    )
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    similarity_temperature: float = Field(default=1.0, gt=0.0)

    checkpoint_every: int = Field(default=1000, ge=1)
    log_every: int = Field(default=50, ge=1)
    seed: int = Field(default=0)

    @model_validator(mode="after")
    def _check_budget(self) -> "TrainConfig":
        if self.total_iters > 0 and (
            self.self_recon_iters + self.prompt_init_iters >= self.total_iters
        ):
            raise ValueError(
                "self_recon_iters + prompt_init_iters must be below total_iters"
            )
        if self.crop_size > self.resize_size:
            raise ValueError("crop_size must not exceed resize_size")
        low, high = self.zoom_range
        if not 0.0 < low <= high <= 1.0:
            raise ValueError("zoom_range must satisfy 0 < low <= high <= 1")
        # 60 and 90 were calibrated on summed batch losses
        if self.thr_A is None:
            self.thr_A = 60.0 / self.batch_prompt
        if self.thr_B is None:
            self.thr_B = 90.0 / self.batch_net
        return self


class TrainState(BaseModel):
    """Alternation bookkeeping persisted with every checkpoint"""

    model_config = ConfigDict(extra="forbid")

    stage: Optional[Stage] = None
    stage_iteration: int = 0
    stage_budget: int = 0
    stage_complete: bool = False
    round_t: int = 0
    iteration: int = 0
    stage_totals: Dict[str, int] = Field(default_factory=dict)
    recent_losses: List[float] = Field(default_factory=list)
    cache_rounds: Dict[str, int] = Field(
        default_factory=dict, description="round index that produced each output cache"
    )
    seed: int = 0
    finished: bool = False

    def count_iteration(self) -> None:
        self.iteration += 1
        self.stage_iteration += 1
        key = self.stage.value
        self.stage_totals[key] = self.stage_totals.get(key, 0) + 1
