"""Artifact persistence: atomic writes, strategy files and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from importlib import metadata
from pathlib import Path

from .evaluation import SCHEMA_VERSION
from .game import StrategyProfile


def atomic_write(path: Path, data: str | bytes) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def strategy_document(game_config: dict, profile: StrategyProfile) -> dict:
    return {"schema_version": SCHEMA_VERSION, "game": game_config, "profile": profile.to_json()}


def read_strategy(path: str | Path) -> tuple[dict, StrategyProfile]:
    """Parse a strategy file; raises ``ValueError`` on any malformation."""
    try:
        doc = json.loads(Path(path).read_text())
        version = doc["schema_version"]
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {version}")
        return doc["game"], StrategyProfile.from_json(doc["profile"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValueError(f"cannot read strategy file {path}: {exc}") from exc


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def tool_version() -> str:
    try:
        return metadata.version("gameshap")
    except metadata.PackageNotFoundError:
        return "unknown"


class RunWriter:
    """Single writer for one run directory; tracks files for the manifest."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.files: list[str] = []

    def write(self, name: str, data: str | bytes) -> Path:
        path = self.out_dir / name
        atomic_write(path, data)
        if name not in self.files:
            self.files.append(name)
        return path

    def manifest(self, command: str, config: dict, seed: int, timings: dict, summary: dict | None = None) -> Path:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "tool_version": tool_version(),
            "master_seed": seed,
            "config": config,
            "timings_sec": timings,
            "files": {name: sha256(self.out_dir / name) for name in sorted(self.files)},
        }
        if summary:
            doc["summary"] = summary
        path = self.out_dir / "run_manifest.json"
        atomic_write(path, dump_json(doc))
        return path
