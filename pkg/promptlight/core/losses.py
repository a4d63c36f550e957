"""
Enhancement objectives: prompt similarity, multi-layer identity, and their sum
"""

from dataclasses import dataclass
from typing import List, Optional

import torch

from ..exceptions import ShapeError
from .entities import IdentityWeights, LossWeights
from .interfaces import VisionLanguageBackend
from .prompting import PromptPair, score_s


@dataclass
class EnhanceLossTerms:
    """Loss value with the components that went into it"""

    total: torch.Tensor
    clip: Optional[torch.Tensor]
    identity: torch.Tensor

    def as_record(self) -> dict:
        return {
            "loss_clip": None if self.clip is None else float(self.clip.detach()),
            "loss_identity": float(self.identity.detach()),
            "loss_total": float(self.total.detach()),
        }


def clip_enhance_loss(
    backend: VisionLanguageBackend,
    enhanced: torch.Tensor,
    prompts: PromptPair,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Batch-mean negative-prompt score of the enhanced images"""
    negative_emb, positive_emb = prompts.text_embeddings(backend)
    scores = score_s(backend.encode_image(enhanced), negative_emb, positive_emb, temperature)
    return scores.mean()


def layer_distances(
    input_features: List[torch.Tensor], enhanced_features: List[torch.Tensor]
) -> List[torch.Tensor]:
    """Per-layer batch-mean L2 distance, divided by sqrt of the per-sample size"""
    distances = []
    for before, after in zip(input_features, enhanced_features):
        diff = (after - before.to(after.dtype)).flatten(start_dim=1)
        norms = torch.linalg.vector_norm(diff, dim=1) / diff.shape[1] ** 0.5
        distances.append(norms.mean())
    return distances


def identity_loss(
    backend: VisionLanguageBackend,
    image: torch.Tensor,
    enhanced: torch.Tensor,
    weights: IdentityWeights,
) -> torch.Tensor:
    """Weighted feature distance between the input and its enhancement"""
    if image.shape != enhanced.shape:
        raise ShapeError(
            "input and enhanced images must match",
            expected=tuple(image.shape),
            actual=tuple(enhanced.shape),
        )
    with torch.no_grad():
        input_features = backend.encode_image_layers(image)
    enhanced_features = backend.encode_image_layers(enhanced)
    distances = layer_distances(input_features, enhanced_features)
    return sum(alpha * distance for alpha, distance in zip(weights.alpha, distances))


def enhance_loss(
    backend: VisionLanguageBackend,
    image: torch.Tensor,
    enhanced: torch.Tensor,
    prompts: PromptPair,
    weights: LossWeights,
    identity_weights: IdentityWeights,
    temperature: float = 1.0,
) -> EnhanceLossTerms:
    """clip + w * identity"""
    clip_term = clip_enhance_loss(backend, enhanced, prompts, temperature)
    identity_term = identity_loss(backend, image, enhanced, identity_weights)
    return EnhanceLossTerms(
        total=clip_term + weights.w * identity_term,
        clip=clip_term,
        identity=identity_term,
    )


def self_reconstruction_loss(
    backend: VisionLanguageBackend,
    image: torch.Tensor,
    enhanced: torch.Tensor,
    identity_weights: IdentityWeights,
) -> EnhanceLossTerms:
    """Identity term alone, used while the enhancer learns to reproduce its input"""
    identity_term = identity_loss(backend, image, enhanced, identity_weights)
    return EnhanceLossTerms(total=identity_term, clip=None, identity=identity_term)
