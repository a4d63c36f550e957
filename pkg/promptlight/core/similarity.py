"""
Text-image similarity arithmetic shared by prompt learning and the losses
"""

import torch

from ..exceptions import ShapeError, ValidationError


def cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """dot(a, b) / (|a| |b|) over the last dimension"""
    if a.shape[-1] != b.shape[-1]:
        raise ShapeError(
            "cosine needs vectors of equal dimension",
            expected=a.shape[-1],
            actual=b.shape[-1],
        )
    norm_a = torch.linalg.vector_norm(a, dim=-1)
    norm_b = torch.linalg.vector_norm(b, dim=-1)
    if bool((norm_a == 0).any()) or bool((norm_b == 0).any()):
        raise ValidationError("cosine is undefined for zero-norm vectors")
    return (a * b).sum(dim=-1) / (norm_a * norm_b)


def two_way_softmax(
    image_emb: torch.Tensor,
    negative_emb: torch.Tensor,
    positive_emb: torch.Tensor,
    temperature: float = 1.0,
) -> torch.Tensor:
    """Softmax weights (..., 2) of [negative, positive] cosine similarities"""
    cos_neg = cosine(image_emb, negative_emb.expand_as(image_emb))
    cos_pos = cosine(image_emb, positive_emb.expand_as(image_emb))
    logits = torch.stack([cos_neg, cos_pos], dim=-1) / temperature
    return torch.softmax(logits, dim=-1)
