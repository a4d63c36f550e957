"""
Backend interfaces - abstract base classes for frozen models and plugin metrics
"""

from abc import ABC, abstractmethod
from typing import List, Optional

import torch

from .entities import BackboneInfo


class VisionLanguageBackend(ABC):
    """Frozen image/text encoder pair sharing one embedding space"""

    @property
    @abstractmethod
    def embed_dim(self) -> int:
        """Dimensionality of image and text embeddings"""

    @property
    @abstractmethod
    def token_dim(self) -> int:
        """Width of one injected token embedding"""

    @property
    @abstractmethod
    def device(self) -> torch.device:
        """Device the frozen weights live on"""

    @property
    @abstractmethod
    def dtype(self) -> torch.dtype:
        """Floating point type of the frozen weights"""

    @abstractmethod
    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        """Unit-norm embeddings (B, embed_dim) of images in [0, 1]"""

    @abstractmethod
    def encode_image_layers(self, images: torch.Tensor) -> List[torch.Tensor]:
        """Five intermediate feature maps of the image encoder, shallow to deep"""

    @abstractmethod
    def encode_prompt(self, tokens: torch.Tensor) -> torch.Tensor:
        """Unit-norm embeddings of raw token-embedding matrices"""

    @abstractmethod
    def encode_text(self, phrases: List[str]) -> torch.Tensor:
        """Unit-norm embeddings through the standard tokenizer path"""

    @abstractmethod
    def word_embeddings(self, phrase: str) -> torch.Tensor:
        """Token embeddings (k, token_dim) of a phrase, without sentinels"""

    @abstractmethod
    def fingerprint(self) -> str:
        """Content hash of every frozen weight"""

    @abstractmethod
    def describe(self) -> BackboneInfo:
        """Identity and fingerprint of the backbone"""


class QualityMetric(ABC):
    """Optional image quality metric plugged into evaluation"""

    name: str = "metric"
    needs_reference: bool = True

    @abstractmethod
    def compute(
        self, enhanced: torch.Tensor, reference: Optional[torch.Tensor] = None
    ) -> float:
        """Score one (3, H, W) image in [0, 1]"""
