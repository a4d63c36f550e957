"""
Configuration management
"""

from .run_config import (BackboneConfig, EnhancerConfig, PathsConfig,
                         PromptConfig, RunConfig, config_hash,
                         load_run_config)
from .settings import settings

__all__ = [
    "settings",
    "RunConfig",
    "PathsConfig",
    "BackboneConfig",
    "PromptConfig",
    "EnhancerConfig",
    "load_run_config",
    "config_hash",
]
