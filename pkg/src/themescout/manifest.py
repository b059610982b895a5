"""Run manifests: every CLI run leaves a key=value audit file beside its
outputs so any artifact is traceable to the exact configuration that made
it. No wall-clock values go in: identical config + seed must give an
identical manifest."""

import hashlib
import json
from pathlib import Path

from . import __version__


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_manifest(path: Path, command: str, config: dict, seed: int, extra: dict | None = None) -> None:
    entries = {
        "command": command,
        "config_hash": config_hash(config),
        "seed": str(seed),
        "package_version": __version__,
    }
    if extra:
        entries.update({k: str(v) for k, v in extra.items()})
    with Path(path).open("w", encoding="utf-8") as f:
        for key in sorted(entries):
            f.write(f"{key}={entries[key]}\n")


def read_manifest(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key] = value
    return out
