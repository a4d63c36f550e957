"""
Image pools on disk: decoding, sampling, augmentation and resizing rules
"""

import os
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import torch
import torch.nn.functional as F
import torchvision.transforms.functional as TF
from PIL import Image, UnidentifiedImageError
from torchvision.utils import save_image

from ..core.entities import PoolKind
from ..exceptions import ConfigurationError, DataError
from ..utils.logging import get_logger
from ..utils.seeding import sample_generator

logger = get_logger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
INFERENCE_LIMIT = 2048


def decode_image(path: str) -> Tuple[torch.Tensor, bool]:
    """Decode to a (3, H, W) float tensor in [0, 1]; also report an ICC profile"""
    try:
        with Image.open(path) as img:
            img.load()
            has_icc = bool(img.info.get("icc_profile"))
            # grayscale and palette images are replicated to RGB
            rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DataError(f"Cannot decode image: {exc}", path=str(path)) from exc
    return TF.to_tensor(rgb), has_icc


def save_png(image: torch.Tensor, path: str) -> str:
    """Write a (3, H, W) tensor in [0, 1] as an 8-bit PNG"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    array = (
        image.detach().clamp(0.0, 1.0).mul(255.0).round().to(torch.uint8).cpu()
    )
    Image.fromarray(array.permute(1, 2, 0).numpy()).save(path, format="PNG")
    return path


def save_comparison(before: torch.Tensor, after: torch.Tensor, path: str) -> str:
    """Side-by-side input | output PNG"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_image(torch.cat([before, after], dim=-1).clamp(0.0, 1.0), path)
    return path


def list_image_files(directory: str) -> List[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise ConfigurationError(f"Image directory does not exist: {directory}")
    return sorted(
        (p for p in root.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.name,
    )


class ImagePool:
    """Decodable images of one directory, keyed by file name"""

    def __init__(
        self,
        directory: str,
        paths: Dict[str, Path],
        skipped: List[str],
        icc_ignored: List[str],
        kind: Optional[PoolKind] = None,
    ):
        self.directory = directory
        self.paths = paths
        self.ids = sorted(paths)
        self.skipped = skipped
        self.icc_ignored = icc_ignored
        self.kind = kind
        self._resized: Dict[Tuple[str, int], torch.Tensor] = {}

    def __len__(self) -> int:
        return len(self.ids)

    def image(self, image_id: str) -> torch.Tensor:
        tensor, _ = decode_image(str(self.paths[image_id]))
        return tensor

    def resized(self, image_id: str, size: int) -> torch.Tensor:
        """Square resize, memoized per (id, size)"""
        key = (image_id, size)
        if key not in self._resized:
            # 8-bit storage keeps whole training pools in memory
            resized = resize_square(self.image(image_id), size)
            self._resized[key] = resized.mul(255.0).round().to(torch.uint8)
        return self._resized[key].float().div(255.0)


def load_pool(
    directory: str, kind: Optional[PoolKind] = None, allow_empty: bool = False
) -> ImagePool:
    """Scan a directory, skipping files that fail to decode"""
    paths: Dict[str, Path] = {}
    skipped: List[str] = []
    icc_ignored: List[str] = []
    for path in list_image_files(directory):
        try:
            _, has_icc = decode_image(str(path))
        except DataError as exc:
            logger.warning(f"Skipping corrupt image {path}: {exc.detail}")
            skipped.append(path.name)
            continue
        if has_icc:
            logger.warning(f"Ignoring ICC profile of {path}; treating it as sRGB")
            icc_ignored.append(path.name)
        paths[path.name] = path

    if not paths and not allow_empty:
        raise ConfigurationError(
            f"No decodable PNG or JPEG images in {directory}",
            field=f"{kind.value}_dir" if kind else None,
        )
    logger.info(f"Loaded {len(paths)} images from {directory} ({len(skipped)} skipped)")
    return ImagePool(directory, paths, skipped, icc_ignored, kind)


class UnpairedDataset:
    """Backlit inputs and well-lit references with no pairing between them"""

    def __init__(self, backlit: ImagePool, welllit: ImagePool):
        overlap = {p.resolve() for p in backlit.paths.values()} & {
            p.resolve() for p in welllit.paths.values()
        }
        if overlap:
            raise ConfigurationError(
                f"Backlit and well-lit pools share {len(overlap)} files",
                field="welllit_dir",
            )
        self.backlit = backlit
        self.welllit = welllit

    @classmethod
    def from_dirs(cls, backlit_dir: str, welllit_dir: str) -> "UnpairedDataset":
        return cls(
            load_pool(backlit_dir, PoolKind.BACKLIT),
            load_pool(welllit_dir, PoolKind.WELLLIT),
        )

    @property
    def counts(self) -> Tuple[int, int]:
        return len(self.backlit), len(self.welllit)

    def pool(self, kind: PoolKind) -> ImagePool:
        return self.backlit if kind == PoolKind.BACKLIT else self.welllit


def resize_square(image: torch.Tensor, size: int) -> torch.Tensor:
    return TF.resize(image, [size, size], antialias=True).clamp(0.0, 1.0)


def augment(
    image: torch.Tensor,
    generator: torch.Generator,
    crop_size: int,
    zoom_range: Tuple[float, float] = (0.8, 1.0),
    flip_prob: float = 0.5,
) -> torch.Tensor:
    """Random zoom-crop, horizontal flip and rotation by a multiple of 90 degrees"""
    side = image.shape[-1]
    low, high = zoom_range
    scale = low + (high - low) * float(torch.rand(1, generator=generator))
    crop = max(1, min(side, int(round(scale * side))))
    top = int(torch.randint(0, side - crop + 1, (1,), generator=generator))
    left = int(torch.randint(0, side - crop + 1, (1,), generator=generator))
    patch = TF.crop(image, top, left, crop, crop)
    if crop != crop_size:
        patch = TF.resize(patch, [crop_size, crop_size], antialias=True)
    if float(torch.rand(1, generator=generator)) < flip_prob:
        patch = TF.hflip(patch)
    turns = int(torch.randint(0, 4, (1,), generator=generator))
    patch = torch.rot90(patch, turns, dims=(-2, -1))
    return patch.clamp(0.0, 1.0).contiguous()


def training_sample(
    pool: ImagePool,
    image_id: str,
    seed: int,
    index: int,
    crop_size: int = 512,
    resize_size: int = 512,
    zoom_range: Tuple[float, float] = (0.8, 1.0),
    flip_prob: float = 0.5,
    stream: Optional[str] = None,
) -> torch.Tensor:
    """Resize to a square, then augment; pure in (seed, stream, index)"""
    stream = stream or f"augment:{pool.kind.value if pool.kind else pool.directory}"
    generator = sample_generator(seed, stream, index)
    return augment(
        pool.resized(image_id, resize_size), generator, crop_size, zoom_range, flip_prob
    )


def draw_ids(pool: ImagePool, seed: int, stream: str, index: int, count: int) -> List[str]:
    """Uniform draw (with replacement) of pool ids; pure in (seed, stream, index)"""
    generator = sample_generator(seed, stream, index)
    picks = torch.randint(0, len(pool), (count,), generator=generator)
    return [pool.ids[int(i)] for i in picks]


def inference_resize(image: torch.Tensor, limit: int = INFERENCE_LIMIT) -> torch.Tensor:
    """Shrink so the long side is `limit` only when both sides exceed it"""
    height, width = image.shape[-2:]
    if height <= limit or width <= limit:
        return image
    scale = limit / max(height, width)
    size = (int(round(height * scale)), int(round(width * scale)))
    batch = image.unsqueeze(0) if image.dim() == 3 else image
    resized = F.interpolate(batch, size=size, mode="bilinear", align_corners=False, antialias=True)
    resized = resized.clamp(0.0, 1.0)
    return resized[0] if image.dim() == 3 else resized
