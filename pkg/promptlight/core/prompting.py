"""
Learnable prompt pair and the prompt-side objectives
"""

from typing import Dict, Optional, Tuple

import torch
import torch.nn as nn

from ..exceptions import ShapeError, StateError, ValidationError
from ..utils.logging import get_logger
from .entities import InitMode, Margins, PromptInit, ScorePair
from .interfaces import VisionLanguageBackend
from .similarity import two_way_softmax

logger = get_logger(__name__)

BCE_CLIP = 1e-7


class PromptPair(nn.Module):
    """Negative and positive token-embedding matrices, the only prompt-side weights"""

    def __init__(
        self,
        negative: torch.Tensor,
        positive: torch.Tensor,
        init: Optional[PromptInit] = None,
        truncated: Optional[Dict[str, int]] = None,
    ):
        super().__init__()
        if negative.dim() != 2 or negative.shape != positive.shape:
            raise ShapeError(
                "prompt matrices must share one (N, dim) shape",
                expected=tuple(negative.shape),
                actual=tuple(positive.shape),
            )
        self.negative = nn.Parameter(negative.detach().clone())
        self.positive = nn.Parameter(positive.detach().clone())
        self.init = init or PromptInit()
        self.truncated = truncated or {}

    @property
    def n_tokens(self) -> int:
        return int(self.negative.shape[0])

    @property
    def token_dim(self) -> int:
        return int(self.negative.shape[1])

    def freeze(self) -> "PromptPair":
        self.requires_grad_(False)
        return self

    def unfreeze(self) -> "PromptPair":
        self.requires_grad_(True)
        return self

    def text_embeddings(
        self, backend: VisionLanguageBackend
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """(negative, positive) unit-norm text embeddings"""
        encoded = backend.encode_prompt(torch.stack([self.negative, self.positive]))
        return encoded[0], encoded[1]


def _fit_rows(rows: torch.Tensor, n_tokens: int, label: str, truncated: dict):
    if rows.shape[0] > n_tokens:
        logger.warning(
            f"{label} phrase has {rows.shape[0]} tokens, truncating to {n_tokens}"
        )
        truncated[label] = int(rows.shape[0])
        return rows[:n_tokens]
    padding = rows.new_zeros(n_tokens - rows.shape[0], rows.shape[1])
    return torch.cat([rows, padding], dim=0)


def init_prompts(
    backend: VisionLanguageBackend,
    init: PromptInit,
    n_tokens: int = 16,
    seed: int = 0,
) -> PromptPair:
    """Build a prompt pair by Gaussian sampling or from word embeddings"""
    shape = (n_tokens, backend.token_dim)
    if init.mode == InitMode.PURE_RANDOM:
        generator = torch.Generator().manual_seed(seed)
        noise = torch.randn((2,) + shape, generator=generator) * init.init_std
        negative, positive = noise[0], noise[1]
        truncated: Dict[str, int] = {}
    else:
        truncated = {}
        negative = _fit_rows(
            backend.word_embeddings(init.negative_phrase).cpu(),
            n_tokens,
            "negative",
            truncated,
        )
        positive = _fit_rows(
            backend.word_embeddings(init.positive_phrase).cpu(),
            n_tokens,
            "positive",
            truncated,
        )
    pair = PromptPair(
        negative.to(backend.dtype), positive.to(backend.dtype), init, truncated
    )
    return pair.to(backend.device)


def y_hat(
    image_emb: torch.Tensor,
    negative_emb: torch.Tensor,
    positive_emb: torch.Tensor,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Probability that each image matches the positive prompt"""
    return two_way_softmax(image_emb, negative_emb, positive_emb, temperature)[..., 1]


def score_s(
    image_emb: torch.Tensor,
    negative_emb: torch.Tensor,
    positive_emb: torch.Tensor,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Negative-prompt softmax weight; low means well-lit-like"""
    return two_way_softmax(image_emb, negative_emb, positive_emb, temperature)[..., 0]


def score_images(
    backend: VisionLanguageBackend,
    prompts: PromptPair,
    images: torch.Tensor,
    temperature: float = 1.0,
) -> torch.Tensor:
    """S(I) for a batch of images"""
    negative_emb, positive_emb = prompts.text_embeddings(backend)
    return score_s(backend.encode_image(images), negative_emb, positive_emb, temperature)


def score_pair(
    image_emb: torch.Tensor,
    negative_emb: torch.Tensor,
    positive_emb: torch.Tensor,
    temperature: float = 1.0,
) -> ScorePair:
    weights = two_way_softmax(image_emb, negative_emb, positive_emb, temperature)
    return ScorePair(y_hat_pos=float(weights[..., 1]), s_neg=float(weights[..., 0]))


def initial_loss(y_hat_values: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Batch-mean binary cross entropy; label 1 is well-lit, 0 backlit"""
    if y_hat_values.numel() == 0:
        raise ValidationError("initial_loss needs a non-empty batch", field="batch")
    if y_hat_values.shape != labels.shape:
        raise ShapeError(
            "scores and labels differ in shape",
            expected=tuple(y_hat_values.shape),
            actual=tuple(labels.shape),
        )
    labels = labels.to(y_hat_values.dtype)
    clipped = y_hat_values.clamp(BCE_CLIP, 1.0 - BCE_CLIP)
    losses = -(labels * torch.log(clipped) + (1.0 - labels) * torch.log(1.0 - clipped))
    return losses.mean()


def refine_loss_round1(
    s_w: torch.Tensor, s_b: torch.Tensor, s_t: torch.Tensor, margins: Margins
) -> torch.Tensor:
    """Three-hinge ranking loss used before any previous-round output exists"""
    loss = (
        torch.relu(s_w - s_b + margins.m0)
        + torch.relu(s_t - s_b + margins.m0)
        + torch.relu(s_w - s_t + margins.m1)
    )
    return loss.mean()


def refine_loss_round2(
    s_w: torch.Tensor,
    s_b: torch.Tensor,
    s_t: torch.Tensor,
    s_tm1: Optional[torch.Tensor],
    margins: Margins,
) -> torch.Tensor:
    """Four-hinge ranking loss that also orders current against previous outputs"""
    if s_tm1 is None:
        raise StateError(
            "No previous-round outputs are cached; use refine_loss_round1 "
            "for the first refinement round",
            stage="prompt_refine",
        )
    loss = (
        torch.relu(s_w - s_b + margins.m0)
        + torch.relu(s_tm1 - s_b + margins.m0)
        + torch.relu(s_w - s_t + margins.m1)
        + torch.relu(s_t - s_tm1 + margins.m2)
    )
    return loss.mean()
