"""
Dependency wiring for the command-line entry points
"""

from typing import Optional

from ..config import BackboneConfig, RunConfig, settings
from ..core.entities import BackboneInfo
from ..core.services import (EvaluationService, InferenceService,
                             TrainingService)
from ..exceptions import CheckpointMismatchError
from ..infrastructure.checkpoints import load_enhancer
from ..infrastructure.image_store import UnpairedDataset
from ..infrastructure.vlm_backend import OpenClipBackend
from ..utils.logging import get_logger

logger = get_logger(__name__)


def get_backend(
    backbone: BackboneConfig, device: str, n_tokens: Optional[int] = None
) -> OpenClipBackend:
    """Frozen vision-language backbone described by a run config"""
    return OpenClipBackend.from_pretrained(
        model_name=backbone.model_name,
        pretrained=backbone.pretrained,
        cache_dir=backbone.cache_dir or settings.WEIGHTS_DIR,
        device=device,
        n_tokens=n_tokens,
        init_seed=backbone.init_seed,
    )


def get_recorded_backend(
    info: BackboneInfo, device: str, n_tokens: Optional[int] = None, path: str = None
) -> OpenClipBackend:
    """Rebuild the backbone a checkpoint was trained against and check its weights"""
    if not info.model_name:
        raise CheckpointMismatchError(
            "Checkpoint does not record its backbone; pass --config", path=path
        )
    backend = get_backend(
        BackboneConfig(
            model_name=info.model_name,
            pretrained=info.pretrained,
            init_seed=info.init_seed or 0,
        ),
        device,
        n_tokens,
    )
    fingerprint = backend.fingerprint()
    if fingerprint != info.weight_fingerprint:
        raise CheckpointMismatchError(
            "Backbone weights differ from the ones the checkpoint was trained with",
            path=path,
            expected=info.weight_fingerprint,
            actual=fingerprint,
        )
    return backend


def get_dataset(config: RunConfig) -> UnpairedDataset:
    config.check_paths()
    return UnpairedDataset.from_dirs(config.paths.backlit_dir, config.paths.welllit_dir)


def get_training_service(config: RunConfig, show_progress: bool = True) -> TrainingService:
    # data problems surface before any weights are loaded
    dataset = get_dataset(config)
    backend = get_backend(config.backbone, config.device, config.prompts.n_tokens)
    return TrainingService(config, backend, dataset, show_progress=show_progress)


def get_inference_service(
    checkpoint: str,
    device: str,
    config: Optional[RunConfig] = None,
    write_comparison: bool = False,
) -> InferenceService:
    net = load_enhancer(checkpoint, expected=config.enhancer if config else None)
    return InferenceService(
        net, device=device, write_comparison=write_comparison, show_progress=True
    )


def get_evaluation_service() -> EvaluationService:
    return EvaluationService()
