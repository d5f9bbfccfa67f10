"""Content-hash keyed artifact cache with per-key writer locking."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable

from filelock import FileLock

log = logging.getLogger(__name__)


def cache_key(namespace: str, inputs: dict) -> str:
    blob = json.dumps({"ns": namespace, "inputs": inputs}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ArtifactCache:
    """Memoize expensive byte-valued computations on disk.

    An entry file is ``<sha256 of payload>\\n<payload>``. A checksum mismatch
    (truncation, manual edits) is treated as a miss: the payload is recomputed
    and the entry overwritten, with a warning. Writers for one key are
    serialized by a lock file, so the first writer's bytes persist and
    concurrent callers read them back.
    """

    def __init__(self, root) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def path_for(self, namespace: str, inputs: dict) -> Path:
        return self.root / namespace / f"{cache_key(namespace, inputs)}.bin"

    def _read(self, path: Path) -> bytes | None:
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            return None
        digest, sep, payload = raw.partition(b"\n")
        if not sep or hashlib.sha256(payload).hexdigest().encode() != digest:
            log.warning("corrupted cache entry %s; recomputing", path)
            return None
        return payload

    def _write(self, path: Path, payload: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        with os.fdopen(fd, "wb") as fh:
            fh.write(hashlib.sha256(payload).hexdigest().encode() + b"\n" + payload)
        os.replace(tmp, path)

    def get_or_compute(self, namespace: str, inputs: dict, compute: Callable[[], bytes]) -> bytes:
        path = self.path_for(namespace, inputs)
        path.parent.mkdir(parents=True, exist_ok=True)
        with FileLock(str(path) + ".lock"):
            payload = self._read(path)
            if payload is not None:
                self.hits += 1
                return payload
            self.misses += 1
            payload = compute()
            self._write(path, payload)
            return payload


def cache_get_or_compute(cache: ArtifactCache | None, namespace: str, inputs: dict,
                         compute: Callable[[], bytes]) -> bytes:
    if cache is None:
        return compute()
    return cache.get_or_compute(namespace, inputs, compute)
