"""
Versioned checkpoint blobs with integrity checks and atomic writes
"""

import hashlib
import io
import os
import struct
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch

from ..core.enhancer import EnhancerConfig, EnhancerNet
from ..core.entities import PromptInit
from ..core.interfaces import VisionLanguageBackend
from ..core.prompting import PromptPair
from ..exceptions import CheckpointIntegrityError, CheckpointMismatchError
from ..utils.logging import get_logger

logger = get_logger(__name__)

MAGIC = b"PLCKPT"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">6sH32sQ")

KIND_PROMPTS = "prompts"
KIND_ENHANCER = "enhancer"
KIND_TRAINING = "training"


def write_blob(payload: Dict[str, Any], path: str) -> str:
    """Serialize, hash, write to a temp file, fsync, rename over `path`"""
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    data = buffer.getvalue()
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, hashlib.sha256(data).digest(), len(data))

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = target.with_name(target.name + ".tmp")
    try:
        with open(tmp_path, "wb") as f:
            f.write(header)
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, target)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()
    return str(target)


def read_blob(path: str) -> Dict[str, Any]:
    """Load a blob, refusing anything whose hash does not match"""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointIntegrityError(f"Cannot read checkpoint: {exc}", path=str(path)) from exc
    if len(raw) < _HEADER.size:
        raise CheckpointIntegrityError("Checkpoint is truncated", path=str(path))

    magic, version, digest, length = _HEADER.unpack(raw[: _HEADER.size])
    if magic != MAGIC:
        raise CheckpointIntegrityError("Not a promptlight checkpoint", path=str(path))
    if version != FORMAT_VERSION:
        raise CheckpointIntegrityError(
            f"Unsupported checkpoint format version {version}", path=str(path)
        )
    data = raw[_HEADER.size :]
    if len(data) != length or hashlib.sha256(data).digest() != digest:
        raise CheckpointIntegrityError("Checkpoint checksum mismatch", path=str(path))
    return torch.load(io.BytesIO(data), map_location="cpu", weights_only=False)


# ----------------------------------------------------------------------
# prompts


def prompt_payload(prompts: PromptPair, iteration: int, backbone: Optional[dict] = None) -> dict:
    return {
        "kind": KIND_PROMPTS,
        "version": FORMAT_VERSION,
        "n_tokens": prompts.n_tokens,
        "embed_dim": prompts.token_dim,
        "negative": prompts.negative.detach().cpu().clone(),
        "positive": prompts.positive.detach().cpu().clone(),
        "init": prompts.init.model_dump(mode="json"),
        "truncated": dict(prompts.truncated),
        "iteration": iteration,
        "backbone": backbone or {},
    }


def prompts_from_payload(payload: dict, path: str = None) -> PromptPair:
    if payload.get("kind") == KIND_TRAINING:
        payload = payload["prompts"]
    if payload.get("kind") != KIND_PROMPTS:
        raise CheckpointMismatchError(
            "Checkpoint does not hold prompts",
            path=path,
            expected=KIND_PROMPTS,
            actual=payload.get("kind"),
        )
    return PromptPair(
        payload["negative"],
        payload["positive"],
        PromptInit(**payload["init"]),
        payload.get("truncated", {}),
    )


def save_prompts(prompts: PromptPair, path: str, iteration: int = 0, backbone: dict = None) -> str:
    return write_blob(prompt_payload(prompts, iteration, backbone), path)


def load_prompts(
    path: str, backend: Optional[VisionLanguageBackend] = None
) -> PromptPair:
    payload = read_blob(path)
    prompts = prompts_from_payload(payload, path)
    if backend is not None:
        if prompts.token_dim != backend.token_dim:
            raise CheckpointMismatchError(
                "Prompt width does not match the backbone",
                path=path,
                expected=backend.token_dim,
                actual=prompts.token_dim,
            )
        prompts = prompts.to(device=backend.device, dtype=backend.dtype)
    return prompts


def export_prompt_text(prompts: PromptPair, path: str) -> str:
    """Plain-text dump of both matrices for inspection"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for label, matrix in (("negative", prompts.negative), ("positive", prompts.positive)):
            np.savetxt(
                f,
                matrix.detach().cpu().double().numpy(),
                fmt="%.8e",
                header=f"{label} prompt, {prompts.n_tokens} x {prompts.token_dim}",
            )
    return path


# ----------------------------------------------------------------------
# enhancer


def enhancer_payload(net: EnhancerNet, round_t: int, iteration: int) -> dict:
    return {
        "kind": KIND_ENHANCER,
        "version": FORMAT_VERSION,
        "architecture": net.architecture(),
        "state_dict": {k: v.detach().cpu().clone() for k, v in net.state_dict().items()},
        "round_t": round_t,
        "iteration": iteration,
    }


def enhancer_from_payload(
    payload: dict, path: str = None, expected: Optional[EnhancerConfig] = None
) -> EnhancerNet:
    if payload.get("kind") == KIND_TRAINING:
        payload = payload["enhancer"]
    if payload.get("kind") != KIND_ENHANCER:
        raise CheckpointMismatchError(
            "Checkpoint does not hold an enhancer",
            path=path,
            expected=KIND_ENHANCER,
            actual=payload.get("kind"),
        )
    architecture = payload["architecture"]
    if expected is not None and expected.model_dump() != architecture:
        raise CheckpointMismatchError(
            "Enhancer architecture does not match the configuration",
            path=path,
            expected=expected.model_dump(),
            actual=architecture,
        )
    net = EnhancerNet(EnhancerConfig(**architecture))
    try:
        net.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise CheckpointMismatchError(
            f"Enhancer weights do not fit the architecture: {exc}", path=path
        ) from exc
    return net


def save_enhancer(net: EnhancerNet, path: str, round_t: int = 0, iteration: int = 0) -> str:
    return write_blob(enhancer_payload(net, round_t, iteration), path)


def load_enhancer(path: str, expected: Optional[EnhancerConfig] = None) -> EnhancerNet:
    return enhancer_from_payload(read_blob(path), path, expected)
