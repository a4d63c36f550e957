"""
Pytest configuration and fixtures for testing
"""

import copy
from pathlib import Path
from typing import List

import numpy as np
import pytest
import torch
from PIL import Image

from promptlight.config import (BackboneConfig, EnhancerConfig, PathsConfig,
                                PromptConfig, RunConfig)
from promptlight.core.entities import TrainConfig
from promptlight.infrastructure.vlm_backend import OpenClipBackend

TINY_MODEL = "promptlight-tiny-rn"


def write_images(
    directory: Path,
    count: int,
    brightness: float,
    size=(40, 48),
    seed: int = 0,
    prefix: str = "img",
    suffix: str = ".png",
) -> List[Path]:
    """Noisy synthetic photos around a target brightness"""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for index in range(count):
        height, width = size
        base = np.linspace(0.6, 1.4, width)[None, :, None] * brightness
        noise = rng.normal(0.0, 0.05, size=(height, width, 3))
        pixels = np.clip(base + noise, 0.0, 1.0)
        path = directory / f"{prefix}_{index:02d}{suffix}"
        Image.fromarray((pixels * 255).round().astype(np.uint8)).save(path)
        paths.append(path)
    return paths


@pytest.fixture(scope="session")
def tiny_backend():
    """Randomly initialized tiny CLIP; no download involved."""
    return OpenClipBackend.from_pretrained(
        TINY_MODEL, pretrained=None, n_tokens=None, init_seed=0
    )


@pytest.fixture(scope="session")
def tiny_backend64(tiny_backend):
    """64-bit copy of the tiny backbone for oracle and gradient checks."""
    model = copy.deepcopy(tiny_backend.model).double()
    return OpenClipBackend(
        model, tokenizer=tiny_backend.tokenizer, model_name=TINY_MODEL, n_tokens=None
    )


@pytest.fixture
def image_dirs(tmp_path):
    """Four dark and four bright synthetic images."""
    backlit = tmp_path / "backlit"
    welllit = tmp_path / "welllit"
    write_images(backlit, 4, brightness=0.15, seed=1, prefix="dark")
    write_images(welllit, 4, brightness=0.7, seed=2, prefix="bright")
    return backlit, welllit


@pytest.fixture
def tiny_config(tmp_path, image_dirs):
    """Run config small enough for a few seconds of CPU training."""
    backlit, welllit = image_dirs
    return RunConfig(
        seed=7,
        device="cpu",
        paths=PathsConfig(
            backlit_dir=str(backlit), welllit_dir=str(welllit), out_dir=str(tmp_path / "run")
        ),
        backbone=BackboneConfig(model_name=TINY_MODEL, pretrained=None),
        prompts=PromptConfig(n_tokens=4),
        enhancer=EnhancerConfig(depth=2, base_channels=4),
        train=TrainConfig(
            total_iters=24,
            prompt_init_iters=4,
            self_recon_iters=2,
            stage_cap=3,
            batch_prompt=2,
            batch_net=2,
            resize_size=32,
            crop_size=32,
            thr_A=-1.0,
            thr_B=-1.0,
            threshold_window=2,
            checkpoint_every=1000,
            log_every=1000,
        ),
    )


@pytest.fixture
def random_image():
    """Seeded random image in [0, 1]."""
    generator = torch.Generator().manual_seed(0)
    return torch.rand(3, 32, 32, generator=generator)
