"""Run manifests: what a command read, how it was configured, and what it wrote."""

from __future__ import annotations

import hashlib
import logging
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable

from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
DISTRIBUTION = "tag-recommendation-graph"


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tool_version() -> str:
    try:
        return metadata.version(DISTRIBUTION)
    except metadata.PackageNotFoundError:
        return "0+unknown"


class RunManifest(BaseModel):
    """Provenance record written next to a command's outputs."""

    command: str
    arguments: list[str] = Field(default_factory=list)
    configuration: dict[str, Any] = Field(default_factory=dict)
    config_hash: str | None = None
    seed: int | None = None
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
    counts: dict[str, Any] = Field(default_factory=dict)
    timings: dict[str, float] = Field(default_factory=dict)
    tool_version: str = Field(default_factory=tool_version)
    python_version: str = Field(default_factory=platform.python_version)
    created: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def add_inputs(self, paths: Iterable[str | Path]) -> None:
        for path in paths:
            self.inputs[str(path)] = sha256_file(path)

    def add_outputs(self, paths: Iterable[str | Path], root: str | Path) -> None:
        """Hash output files, keyed by their path relative to ``root``."""
        for path in paths:
            self.outputs[Path(path).relative_to(root).as_posix()] = sha256_file(path)

    def write(self, output_dir: str | Path) -> Path:
        """Write ``manifest.json`` into ``output_dir``, replacing any earlier one."""
        target = Path(output_dir) / MANIFEST_FILE
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"Wrote manifest {target}")
        return target


def read_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILE
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
