"""
Core Services Package
Contains the training, inference and evaluation use cases
"""

from .evaluation_service import EvaluationService, spearman
from .inference_service import InferenceService
from .training_service import TrainingService

__all__ = [
    "TrainingService",
    "InferenceService",
    "EvaluationService",
    "spearman",
]
