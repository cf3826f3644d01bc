"""Run manifest: what was produced, from which config, with checksums."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path


def manifest_name(command: str) -> str:
    return f"manifest.{command}.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    version: str
    started: str = field(default_factory=_now)
    finished: str = ""
    artifacts: list = field(default_factory=list)

    def add(self, path) -> Path:
        p = Path(path)
        self.artifacts.append({"path": p.name, "sha256": file_sha256(p), "bytes": p.stat().st_size})
        return p

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "artifacts": sorted(self.artifacts, key=lambda a: a["path"]),
        }

    def write(self, out_dir) -> Path:
        self.finished = _now()
        path = Path(out_dir) / manifest_name(self.command)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return cls(d["command"], d["config_hash"], d["version"], d["started"], d["finished"], d["artifacts"])

    def verify(self, out_dir) -> list[str]:
        """Names of listed artifacts that are missing or whose checksum changed."""
        bad = []
        for a in self.artifacts:
            p = Path(out_dir) / a["path"]
            if not p.is_file() or file_sha256(p) != a["sha256"]:
                bad.append(a["path"])
        return bad
