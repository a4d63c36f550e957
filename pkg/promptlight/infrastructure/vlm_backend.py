"""
Frozen open_clip backbone with raw token-embedding injection
"""

import hashlib
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import open_clip
import torch
import torch.nn as nn
import torch.nn.functional as F
from open_clip.constants import OPENAI_DATASET_MEAN, OPENAI_DATASET_STD

from ..core.entities import LAYER_COUNT, BackboneInfo
from ..core.interfaces import VisionLanguageBackend
from ..core.similarity import cosine
from ..exceptions import BackboneError, ShapeError, ValidationError
from ..utils.logging import get_logger

logger = get_logger(__name__)

MODEL_CONFIG_DIR = Path(__file__).parent / "model_configs"
open_clip.add_model_config(MODEL_CONFIG_DIR)

_RESNET_LAYERS = ("layer1", "layer2", "layer3", "layer4")

__all__ = ["OpenClipBackend", "cosine", "weight_fingerprint"]


def weight_fingerprint(module: nn.Module) -> str:
    """sha256 over every tensor of a state dict, in key order"""
    digest = hashlib.sha256()
    for key, tensor in sorted(module.state_dict().items()):
        digest.update(key.encode("utf-8"))
        digest.update(str(tensor.dtype).encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class OpenClipBackend(VisionLanguageBackend):
    """
    Wraps a pretrained open_clip CLIP model and never lets its weights train.

    Learnable prompts are injected after the token-embedding lookup, between the
    start and end sentinels, and pooled at the end-sentinel position.
    """

    def __init__(
        self,
        model: nn.Module,
        tokenizer: Callable[[List[str]], torch.Tensor] = open_clip.tokenize,
        model_name: str = "custom",
        pretrained: Optional[str] = None,
        n_tokens: Optional[int] = 16,
        mean: Sequence[float] = OPENAI_DATASET_MEAN,
        std: Sequence[float] = OPENAI_DATASET_STD,
    ):
        model.eval()
        model.requires_grad_(False)
        self.model = model
        self.tokenizer = tokenizer
        self.model_name = model_name
        self.pretrained = pretrained or "random"
        self.n_tokens = n_tokens
        self.init_seed: Optional[int] = None
        self._mean = torch.tensor(mean).view(1, 3, 1, 1)
        self._std = torch.tensor(std).view(1, 3, 1, 1)
        self._image_size = self._native_size(model.visual)

        sentinels = self.tokenizer([""])
        self._context_length = int(sentinels.shape[-1])
        self._sot_id = int(sentinels[0, 0])
        self._eot_id = int(sentinels[0, 1])

    @classmethod
    def from_pretrained(
        cls,
        model_name: str = "RN101",
        pretrained: Optional[str] = "openai",
        cache_dir: Optional[str] = None,
        device: str = "cpu",
        n_tokens: Optional[int] = 16,
        init_seed: int = 0,
    ) -> "OpenClipBackend":
        """Load weights from the open_clip registry (or seed a random model)"""
        try:
            # unweighted configs still need reproducible weights
            torch.manual_seed(init_seed)
            model = open_clip.create_model(
                model_name,
                pretrained=pretrained or None,
                cache_dir=cache_dir,
                device=device,
            )
            tokenizer = open_clip.get_tokenizer(model_name)
        except (RuntimeError, ValueError, OSError) as exc:
            raise BackboneError(
                f"Could not load backbone {model_name}/{pretrained}: {exc}",
                backbone=model_name,
            ) from exc

        preprocess_cfg = getattr(model.visual, "preprocess_cfg", None) or {}
        backend = cls(
            model,
            tokenizer=tokenizer,
            model_name=model_name,
            pretrained=pretrained,
            n_tokens=n_tokens,
            mean=preprocess_cfg.get("mean", OPENAI_DATASET_MEAN),
            std=preprocess_cfg.get("std", OPENAI_DATASET_STD),
        )
        if not pretrained:
            backend.init_seed = init_seed
        logger.info(
            f"Loaded backbone {model_name}/{backend.pretrained} "
            f"(embed_dim={backend.embed_dim}, input={backend.image_size})"
        )
        return backend

    @staticmethod
    def _native_size(visual: nn.Module) -> Tuple[int, int]:
        size = getattr(visual, "image_size", 224)
        if isinstance(size, int):
            return (size, size)
        return tuple(size)

    # ------------------------------------------------------------------
    # properties

    @property
    def embed_dim(self) -> int:
        return int(self.model.visual.output_dim)

    @property
    def token_dim(self) -> int:
        return int(self.model.token_embedding.weight.shape[1])

    @property
    def device(self) -> torch.device:
        return self.model.token_embedding.weight.device

    @property
    def dtype(self) -> torch.dtype:
        return self.model.token_embedding.weight.dtype

    @property
    def image_size(self) -> Tuple[int, int]:
        return self._image_size

    @property
    def context_length(self) -> int:
        return self._context_length

    # ------------------------------------------------------------------
    # images

    def _prepare(self, images: torch.Tensor) -> torch.Tensor:
        if images.dim() == 3:
            images = images.unsqueeze(0)
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeError(
                "images must be (B, 3, H, W) or (3, H, W)",
                expected="(B, 3, H, W)",
                actual=tuple(images.shape),
            )
        if torch.isnan(images).any():
            raise ValidationError("images contain NaN pixels", field="images")

        x = images.to(device=self.device, dtype=self.dtype)
        if tuple(x.shape[-2:]) != self._image_size:
            x = F.interpolate(
                x, size=self._image_size, mode="bilinear", align_corners=False
            )
        mean = self._mean.to(device=x.device, dtype=x.dtype)
        std = self._std.to(device=x.device, dtype=x.dtype)
        return (x - mean) / std

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        """Gradients reach the input pixels, never the weights"""
        features = self.model.encode_image(self._prepare(images))
        return F.normalize(features, dim=-1)

    def encode_image_layers(self, images: torch.Tensor) -> List[torch.Tensor]:
        visual = self.model.visual
        if not hasattr(visual, "stem") or not all(
            hasattr(visual, name) for name in _RESNET_LAYERS
        ):
            raise BackboneError(
                "Layer features need a ResNet-style image encoder",
                backbone=self.model_name,
            )
        x = visual.stem(self._prepare(images))
        features = [x]
        for name in _RESNET_LAYERS:
            x = getattr(visual, name)(x)
            features.append(x)
        assert len(features) == LAYER_COUNT
        return features

    # ------------------------------------------------------------------
    # text

    def _run_text_tower(self, x: torch.Tensor) -> torch.Tensor:
        transformer = self.model.transformer
        batch_first = getattr(transformer, "batch_first", False)
        if not batch_first:
            x = x.permute(1, 0, 2)
        x = transformer(x, attn_mask=getattr(self.model, "attn_mask", None))
        if not batch_first:
            x = x.permute(1, 0, 2)
        return self.model.ln_final(x)

    def _project_text(self, pooled: torch.Tensor) -> torch.Tensor:
        projection = self.model.text_projection
        if projection is None:
            return pooled
        if isinstance(projection, nn.Linear):
            return projection(pooled)
        return pooled @ projection

    def encode_prompt(self, tokens: torch.Tensor) -> torch.Tensor:
        """Encode (N, token_dim) or (P, N, token_dim) continuous tokens"""
        single = tokens.dim() == 2
        if single:
            tokens = tokens.unsqueeze(0)
        if tokens.dim() != 3 or tokens.shape[-1] != self.token_dim:
            raise ShapeError(
                "prompt tokens must be (N, token_dim)",
                expected=f"(N, {self.token_dim})",
                actual=tuple(tokens.shape),
            )
        count, length = tokens.shape[0], tokens.shape[1]
        if self.n_tokens is not None and length != self.n_tokens:
            raise ShapeError(
                "unexpected prompt length", expected=self.n_tokens, actual=length
            )
        if length + 2 > self._context_length:
            raise ShapeError(
                "prompt does not fit the text context",
                expected=f"<= {self._context_length - 2}",
                actual=length,
            )

        ids = torch.zeros(count, self._context_length, dtype=torch.long)
        ids[:, 0] = self._sot_id
        ids[:, length + 1] = self._eot_id
        frame = self.model.token_embedding(ids.to(self.device)).to(self.dtype)
        x = torch.cat(
            [frame[:, :1], tokens.to(device=self.device, dtype=self.dtype), frame[:, length + 1 :]],
            dim=1,
        )
        x = x + self.model.positional_embedding.to(self.dtype)
        x = self._run_text_tower(x)
        pooled = x[torch.arange(count, device=x.device), length + 1]
        embedded = F.normalize(self._project_text(pooled), dim=-1)
        return embedded[0] if single else embedded

    def encode_text(self, phrases: List[str]) -> torch.Tensor:
        ids = self.tokenizer(list(phrases)).to(self.device)
        return F.normalize(self.model.encode_text(ids), dim=-1)

    def token_ids(self, phrase: str) -> torch.Tensor:
        """Tokenizer ids of a phrase between (excluding) the sentinels"""
        ids = self.tokenizer([phrase])[0]
        end = int((ids == self._eot_id).nonzero()[0, 0])
        return ids[1:end]

    def word_embeddings(self, phrase: str) -> torch.Tensor:
        ids = self.token_ids(phrase).to(self.device)
        with torch.no_grad():
            return self.model.token_embedding(ids).to(self.dtype).clone()

    # ------------------------------------------------------------------
    # identity

    def fingerprint(self) -> str:
        return weight_fingerprint(self.model)

    def describe(self) -> BackboneInfo:
        return BackboneInfo(
            image_encoder_id=f"{self.model_name}/{self.pretrained}:visual",
            text_encoder_id=f"{self.model_name}/{self.pretrained}:text",
            embed_dim=self.embed_dim,
            weight_fingerprint=self.fingerprint(),
            model_name=self.model_name,
            pretrained=None if self.pretrained == "random" else self.pretrained,
            init_seed=self.init_seed,
        )
