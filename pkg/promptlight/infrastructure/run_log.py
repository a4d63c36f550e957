"""
Line-delimited metrics and timing logs plus the run manifest
"""

import json
import math
import os
import time
from pathlib import Path
from typing import Any, Dict, Optional

from ..core.entities import RunManifest
from ..utils.logging import get_logger

logger = get_logger(__name__)

METRICS_FILE = "metrics.jsonl"
TIMING_FILE = "timing.jsonl"
MANIFEST_FILE = "manifest.json"


def _clean(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


class RunLog:
    """
    Appends one JSON record per logged iteration.

    Wall time goes to a separate timing file so the metrics file depends only on
    config and seed.
    """

    def __init__(self, out_dir: str, append: bool = False):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.metrics_path = self.out_dir / METRICS_FILE
        self.timing_path = self.out_dir / TIMING_FILE
        self.manifest_path = self.out_dir / MANIFEST_FILE
        if not append:
            for path in (self.metrics_path, self.timing_path):
                if path.exists():
                    path.unlink()
        self._started = time.perf_counter()

    @staticmethod
    def _append(path: Path, record: Dict[str, Any]) -> None:
        line = json.dumps({k: _clean(v) for k, v in record.items()}, sort_keys=True)
        with open(path, "a") as f:
            f.write(line + "\n")

    def record(self, iteration: int, stage: str, round_t: int, **losses: Optional[float]) -> None:
        self._append(
            self.metrics_path,
            {"iter": iteration, "stage": stage, "round_t": round_t, **losses},
        )
        self._append(
            self.timing_path,
            {"iter": iteration, "wall_time": round(time.perf_counter() - self._started, 6)},
        )

    def truncate_after(self, iteration: int) -> None:
        """Drop records past `iteration` (used when resuming from a checkpoint)"""
        for path in (self.metrics_path, self.timing_path):
            if not path.exists():
                continue
            kept = [
                line
                for line in path.read_text().splitlines()
                if line and json.loads(line)["iter"] <= iteration
            ]
            path.write_text("".join(line + "\n" for line in kept))

    def write_manifest(self, manifest: RunManifest) -> str:
        tmp = self.manifest_path.with_name(MANIFEST_FILE + ".tmp")
        tmp.write_text(manifest.model_dump_json(indent=2))
        os.replace(tmp, self.manifest_path)
        return str(self.manifest_path)


def write_json(path: str, payload: Dict[str, Any]) -> str:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    return path


def write_jsonl(path: str, records) -> str:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return path
