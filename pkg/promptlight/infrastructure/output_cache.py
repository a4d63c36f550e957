"""
On-disk cache of enhanced outputs for the current and previous rounds
"""

import os
import shutil
from pathlib import Path
from typing import Dict, Optional

import torch

from ..utils.logging import get_logger

logger = get_logger(__name__)

CURRENT = "current"
PREVIOUS = "previous"
ROUND_MARKER = "ROUND"


class OutputCache:
    """
    Enhanced training rasters keyed by image id.

    `current` holds I_t from the network frozen at the start of the running
    round, `previous` holds I_{t-1} from the round before it.
    """

    def __init__(self, root: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _slot(self, slot: str) -> Path:
        return self.root / slot

    def _file(self, slot: str, image_id: str) -> Path:
        return self._slot(slot) / f"{image_id}.pt"

    def rotate(self) -> None:
        """current becomes previous; the old previous is dropped"""
        previous = self._slot(PREVIOUS)
        current = self._slot(CURRENT)
        if previous.exists():
            shutil.rmtree(previous)
        if current.exists():
            os.replace(current, previous)

    def write(self, slot: str, image_id: str, image: torch.Tensor) -> None:
        target = self._file(slot, image_id)
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        torch.save(image.detach().cpu().clone(), tmp)
        os.replace(tmp, target)

    def read(self, slot: str, image_id: str) -> Optional[torch.Tensor]:
        path = self._file(slot, image_id)
        if not path.exists():
            return None
        return torch.load(path, map_location="cpu")

    def has_slot(self, slot: str) -> bool:
        path = self._slot(slot)
        return path.exists() and any(path.glob("*.pt"))

    def ids(self, slot: str) -> Dict[str, Path]:
        path = self._slot(slot)
        if not path.exists():
            return {}
        return {p.stem: p for p in sorted(path.glob("*.pt"))}

    def mark_round(self, slot: str, round_t: int) -> None:
        path = self._slot(slot)
        path.mkdir(parents=True, exist_ok=True)
        (path / ROUND_MARKER).write_text(str(round_t))

    def round_of(self, slot: str) -> Optional[int]:
        marker = self._slot(slot) / ROUND_MARKER
        if not marker.exists():
            return None
        return int(marker.read_text().strip())

    def clear(self) -> None:
        if self.root.exists():
            shutil.rmtree(self.root)
        self.root.mkdir(parents=True, exist_ok=True)
