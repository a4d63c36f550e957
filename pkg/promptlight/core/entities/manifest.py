"""
Run manifest entities
"""

from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class BackboneInfo(BaseModel):
    """Identity of the frozen vision-language model"""

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "image_encoder_id": "RN101/openai:visual",
                "text_encoder_id": "RN101/openai:text",
                "embed_dim": 512,
                "weight_fingerprint": "3f1c...",
            }
        }
    )

    image_encoder_id: str
    text_encoder_id: str
    embed_dim: int = Field(..., ge=1)
    weight_fingerprint: str
    model_name: Optional[str] = Field(default=None, description="open_clip model name")
    pretrained: Optional[str] = Field(default=None, description="open_clip pretrained tag")
    init_seed: Optional[int] = Field(
        default=None, description="seed that produced randomly initialized weights"
    )


class CheckpointRecord(BaseModel):
    """What one checkpoint call wrote"""

    iteration: int
    stage: Optional[str]
    round_t: int
    training_path: str
    prompt_path: str
    enhancer_path: str
    prompt_text_path: Optional[str] = None
    config_hash: str
    weight_fingerprint: str


class RunManifest(BaseModel):
    """Everything needed to reproduce a run"""

    command: str
    code_version: str
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    seed: Optional[int] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    config_hash: Optional[str] = None
    backbone: Optional[BackboneInfo] = None
    decisions: Dict[str, Any] = Field(default_factory=dict)
    warnings: Dict[str, Any] = Field(default_factory=dict)
    checkpoints: List[CheckpointRecord] = Field(default_factory=list)
    final_fingerprint: Optional[str] = None
