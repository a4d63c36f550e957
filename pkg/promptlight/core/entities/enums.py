"""
Domain enums
"""

from enum import Enum


class Stage(str, Enum):
    PROMPT_INIT = "prompt_init"
    SELF_RECON = "self_recon"
    ENHANCE_INITIAL = "enhance_initial"
    PROMPT_REFINE = "prompt_refine"
    ENHANCE_TUNE = "enhance_tune"

    @property
    def trains_prompts(self) -> bool:
        return self in (Stage.PROMPT_INIT, Stage.PROMPT_REFINE)


class InitMode(str, Enum):
    PURE_RANDOM = "pure_random"
    WORD_SEEDED = "word_seeded"


class IdentityPhase(str, Enum):
    SELF_RECONSTRUCTION = "self_reconstruction"
    ENHANCEMENT = "enhancement"


class PoolKind(str, Enum):
    BACKLIT = "backlit"
    WELLLIT = "welllit"
