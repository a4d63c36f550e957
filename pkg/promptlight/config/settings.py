"""
Process-level settings read from the environment
"""

import os
from typing import Optional

from pydantic import BaseModel, Field


class Settings(BaseModel):
    """Runtime settings that do not belong to a single run config"""

    # Logging
    LOG_LEVEL: str = Field(
        default=os.getenv("PROMPTLIGHT_LOG_LEVEL", "INFO"), description="Logging level"
    )
    LOG_FILE: Optional[str] = Field(
        default=os.getenv("PROMPTLIGHT_LOG_FILE") or None,
        description="Extra log file path (run logs always go to the run directory)",
    )

    # Pretrained weights
    WEIGHTS_DIR: Optional[str] = Field(
        default=os.getenv("PROMPTLIGHT_WEIGHTS_DIR") or None,
        description="Cache directory for pretrained vision-language weights",
    )

    # Compute
    DEVICE: str = Field(
        default=os.getenv("PROMPTLIGHT_DEVICE", "cpu"),
        description="Default torch device when the run config does not set one",
    )
    NUM_THREADS: int = Field(
        default=int(os.getenv("PROMPTLIGHT_NUM_THREADS", "0")),
        description="torch intra-op threads (0 keeps the torch default)",
    )

    # Path overrides for run configs
    BACKLIT_DIR: Optional[str] = Field(
        default=os.getenv("PROMPTLIGHT_BACKLIT_DIR") or None,
        description="Overrides paths.backlit_dir",
    )
    WELLLIT_DIR: Optional[str] = Field(
        default=os.getenv("PROMPTLIGHT_WELLLIT_DIR") or None,
        description="Overrides paths.welllit_dir",
    )
    OUT_DIR: Optional[str] = Field(
        default=os.getenv("PROMPTLIGHT_OUT_DIR") or None,
        description="Overrides paths.out_dir",
    )
    CHECKPOINT_DIR: Optional[str] = Field(
        default=os.getenv("PROMPTLIGHT_CHECKPOINT_DIR") or None,
        description="Overrides paths.checkpoint_dir",
    )

    def path_overrides(self) -> dict:
        """Path fields set through the environment"""
        overrides = {
            "backlit_dir": self.BACKLIT_DIR,
            "welllit_dir": self.WELLLIT_DIR,
            "out_dir": self.OUT_DIR,
            "checkpoint_dir": self.CHECKPOINT_DIR,
        }
        return {key: value for key, value in overrides.items() if value}


# Create global settings instance
settings = Settings()
