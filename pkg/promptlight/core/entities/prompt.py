"""
Prompt-side domain entities
"""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .enums import InitMode


class Margins(BaseModel):
    """Ranking margins between backlit, enhanced and well-lit scores"""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={"example": {"m0": 0.9, "m1": 0.2, "m2": 0.2}},
    )

    m0: float = Field(default=0.9, ge=0.0, le=1.0, description="backlit vs rest")
    m1: float = Field(default=0.2, ge=0.0, description="enhanced vs well-lit")
    m2: Optional[float] = Field(
        default=None, ge=0.0, description="current vs previous round (defaults to m1)"
    )

    @model_validator(mode="after")
    def _check_order(self) -> "Margins":
        if self.m1 > self.m0:
            raise ValueError("margins must satisfy 0 <= m1 <= m0 <= 1")
        if self.m2 is None:
            self.m2 = self.m1
        return self


class PromptInit(BaseModel):
    """How a prompt pair is initialized"""

    model_config = ConfigDict(extra="forbid")

    mode: InitMode = Field(default=InitMode.WORD_SEEDED)
    negative_phrase: str = Field(default="low light")
    positive_phrase: str = Field(default="normal light")
    init_std: float = Field(default=0.02, gt=0.0)


class ScorePair(BaseModel):
    """Positive-prompt probability and its negative complement"""

    model_config = ConfigDict(
        json_schema_extra={"example": {"y_hat_pos": 0.8808, "s_neg": 0.1192}}
    )

    y_hat_pos: float = Field(..., gt=0.0, lt=1.0)
    s_neg: float = Field(..., gt=0.0, lt=1.0)
