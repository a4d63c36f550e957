"""
Domain entities package
"""

# Enums
from .enums import IdentityPhase, InitMode, PoolKind, Stage
# Manifest entities
from .manifest import BackboneInfo, CheckpointRecord, RunManifest
# Prompt entities
from .prompt import Margins, PromptInit, ScorePair
# Report entities
from .report import (EvalReport, ExposureRamp, ImageQuality, ImageTiming,
                     InferenceSummary, ScoreStats, SkippedItem)
# Training entities
from .training import (LAYER_COUNT, IdentityWeights, LossWeights, TrainConfig,
                       TrainState)

__all__ = [
    # Enums
    "Stage",
    "InitMode",
    "IdentityPhase",
    "PoolKind",
    # Prompt entities
    "Margins",
    "PromptInit",
    "ScorePair",
    # Training entities
    "LAYER_COUNT",
    "IdentityWeights",
    "LossWeights",
    "TrainConfig",
    "TrainState",
    # Report entities
    "ImageQuality",
    "SkippedItem",
    "ScoreStats",
    "EvalReport",
    "ImageTiming",
    "InferenceSummary",
    "ExposureRamp",
    # Manifest entities
    "BackboneInfo",
    "CheckpointRecord",
    "RunManifest",
]
