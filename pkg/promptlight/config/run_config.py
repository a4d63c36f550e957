"""
Declarative run configuration loaded from YAML
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from ..core.enhancer import EnhancerConfig
from ..core.entities import InitMode, PromptInit, TrainConfig
from ..exceptions import ConfigurationError
from ..utils.logging import get_logger
from .settings import settings

logger = get_logger(__name__)


class PathsConfig(BaseModel):
    """Image pools and output locations"""

    model_config = ConfigDict(extra="forbid")

    backlit_dir: str = Field(..., description="Directory of backlit training images")
    welllit_dir: str = Field(..., description="Directory of well-lit reference images")
    out_dir: str = Field(default="runs/default", description="Logs, manifest, caches")
    checkpoint_dir: Optional[str] = Field(
        default=None, description="Defaults to <out_dir>/checkpoints"
    )

    def resolved_checkpoint_dir(self) -> str:
        return self.checkpoint_dir or str(Path(self.out_dir) / "checkpoints")


class BackboneConfig(BaseModel):
    """Which open_clip model plays the frozen vision-language role"""

    model_config = ConfigDict(extra="forbid")

    model_name: str = Field(default="RN101")
    pretrained: Optional[str] = Field(
        default="openai", description="open_clip pretrained tag; null for random weights"
    )
    cache_dir: Optional[str] = Field(default_factory=lambda: settings.WEIGHTS_DIR)
    init_seed: int = Field(default=0, description="seed for randomly initialized weights")


class PromptConfig(BaseModel):
    """Learnable prompt shape and initialization"""

    model_config = ConfigDict(extra="forbid")

    n_tokens: int = Field(default=16, ge=1)
    init_mode: InitMode = Field(default=InitMode.WORD_SEEDED)
    negative_phrase: str = Field(default="low light")
    positive_phrase: str = Field(default="normal light")
    init_std: float = Field(default=0.02, gt=0.0)

    def init(self) -> PromptInit:
        return PromptInit(
            mode=self.init_mode,
            negative_phrase=self.negative_phrase,
            positive_phrase=self.positive_phrase,
            init_std=self.init_std,
        )


class RunConfig(BaseModel):
    """Everything a training run needs"""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "seed": 0,
                "device": "cpu",
                "paths": {"backlit_dir": "data/backlit", "welllit_dir": "data/welllit"},
                "backbone": {"model_name": "RN101", "pretrained": "openai"},
            }
        },
    )

    seed: int = Field(default=0)
    device: str = Field(default_factory=lambda: settings.DEVICE)
    log_level: str = Field(default_factory=lambda: settings.LOG_LEVEL)
    paths: PathsConfig
    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    prompts: PromptConfig = Field(default_factory=PromptConfig)
    enhancer: EnhancerConfig = Field(default_factory=EnhancerConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def _share_seed(self) -> "RunConfig":
        # one seed drives sampling, initialization and augmentation
        if "seed" in self.train.model_fields_set and self.train.seed != self.seed:
            raise ValueError(
                f"train.seed ({self.train.seed}) conflicts with seed ({self.seed}); "
                "set only the top-level seed"
            )
        self.train.seed = self.seed
        return self

    def check_paths(self) -> None:
        """Input pools must exist before any weights are loaded"""
        for field in ("backlit_dir", "welllit_dir"):
            value = getattr(self.paths, field)
            if not Path(value).is_dir():
                raise ConfigurationError(
                    f"paths.{field} is not a directory: {value}", field=f"paths.{field}"
                )


def config_hash(config: BaseModel) -> str:
    """sha256 of the canonical JSON dump"""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _line_index(node: yaml.Node, prefix: Tuple = (), index: Dict = None) -> Dict[Tuple, int]:
    """Map each key path of a composed YAML document to its 1-based line"""
    index = {} if index is None else index
    index.setdefault(prefix, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = prefix + (key_node.value,)
            index[path] = key_node.start_mark.line + 1
            _line_index(value_node, path, index)
    elif isinstance(node, yaml.SequenceNode):
        for position, item in enumerate(node.value):
            _line_index(item, prefix + (position,), index)
    return index


def _line_for(loc: Tuple, lines: Dict[Tuple, int]) -> Optional[int]:
    loc = tuple(loc)
    while loc:
        if loc in lines:
            return lines[loc]
        loc = loc[:-1]
    return lines.get(())


def _set_path(data: Dict[str, Any], dotted: str, value: Any) -> None:
    node = data
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"Cannot override {dotted}: {key} is not a mapping")
    node[keys[-1]] = value


def load_run_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Parse and validate a YAML run config.

    Environment path overrides apply first, then `overrides` (dotted keys, e.g.
    from --seed/--device). Errors name the field and the YAML line.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"Cannot read config {path}: {exc}") from exc

    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigurationError(
            f"Invalid YAML in {path}: {exc}",
            line=mark.line + 1 if mark else None,
        ) from exc

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must hold a mapping at the top level", line=1)
    lines = _line_index(root) if root is not None else {(): 1}

    for key, value in settings.path_overrides().items():
        logger.info(f"paths.{key} overridden from the environment")
        _set_path(data, f"paths.{key}", value)
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_path(data, dotted, value)

    try:
        config = RunConfig.model_validate(data)
    except PydanticValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        line = _line_for(first["loc"], lines)
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'} "
            f"(line {_line_for(err['loc'], lines)}): {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigurationError(f"{path}: {problems}", field=field, line=line) from exc
    return config
