"""Run manifests: the immutable provenance record written next to every
command's outputs (config and template hashes, endpoint identities, dataset
fingerprint, timestamps). Output data files stay free of run-specific fields
so reruns under mocks are byte-identical; the manifest sidecar carries the
non-deterministic parts.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path


def file_fingerprint(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    run_id: str
    command: str
    created_at: str
    config: dict
    template_hashes: dict
    endpoints: dict
    dataset_fingerprint: str | None
    outputs: list[str] = field(default_factory=list)
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def add_output(self, path: str | Path) -> None:
        """Record an output file with its content hash."""
        self.outputs.append({"path": str(path), "sha256": file_fingerprint(path)})

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "created_at": self.created_at,
            "config": self.config,
            "template_hashes": self.template_hashes,
            "endpoints": self.endpoints,
            "dataset_fingerprint": self.dataset_fingerprint,
            "outputs": self.outputs,
            "seed": self.seed,
            "extra": self.extra,
        }

    def write(self, path: str | Path) -> None:
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


def build_manifest(
    command: str,
    config: dict,
    template_hashes: dict,
    endpoints: dict,
    dataset_path: str | Path | None = None,
    extra: dict | None = None,
) -> RunManifest:
    fingerprint = file_fingerprint(dataset_path) if dataset_path else None
    content = json.dumps(
        {"command": command, "config": config, "dataset": fingerprint}, sort_keys=True
    )
    content_hash = hashlib.sha256(content.encode("utf-8")).hexdigest()
    created = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    return RunManifest(
        run_id=f"{time.strftime('%Y%m%d%H%M%S', time.gmtime())}-{content_hash[:8]}",
        command=command,
        created_at=created,
        config=config,
        template_hashes=template_hashes,
        endpoints=endpoints,
        dataset_fingerprint=fingerprint,
        seed=int(content_hash[:8], 16),
        extra=extra or {},
    )
