"""Atomic file writes and content-hash manifests shared by the pipeline stages."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

ARTIFACTS = "artifacts.json"


def atomic_write(path, data: bytes | str) -> Path:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def hash_tree(root, exclude=(ARTIFACTS,)) -> dict[str, str]:
    """``{relative posix path: sha256}`` for every file below ``root``."""
    root = Path(root)
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in exclude and not p.name.endswith(".tmp"):
            out[p.relative_to(root).as_posix()] = sha256(p)
    return out


def write_manifest(root, name: str = ARTIFACTS, exclude=()) -> Path:
    """Hash every file under ``root`` into ``root/name``; paths are relative, no timestamps."""
    files = hash_tree(root, exclude=(name, *exclude))
    return atomic_write(Path(root) / name, dump_json({"files": files}))
