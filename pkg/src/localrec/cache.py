"""Content-addressed stage cache.

A stage's key is the sha256 of its name, its parameter payload and its
parents' keys, so any upstream change invalidates everything downstream
without hashing artifact bytes.  Artifacts are written to a temp file and
renamed into place; presence of the final file is the hit condition.
"""

from __future__ import annotations

import hashlib
import json
import os


def stage_key(stage: str, payload: dict, parents=()) -> str:
    body = json.dumps({"stage": stage, "payload": payload,
                       "parents": list(parents)},
                      sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class StageCache:
    """Disabled when root is falsy: lookups miss and stores are no-ops."""

    def __init__(self, root=None):
        self.root = str(root) if root else None

    @property
    def enabled(self) -> bool:
        return self.root is not None

    def _dir(self, stage: str, key: str) -> str:
        return os.path.join(self.root, stage, key[:24])

    def lookup(self, stage: str, key: str, name: str):
        if not self.enabled:
            return None
        path = os.path.join(self._dir(stage, key), name)
        return path if os.path.exists(path) else None

    def store(self, stage: str, key: str, name: str, writer):
        """writer(path) must create the artifact; returns the final path."""
        if not self.enabled:
            return None
        d = self._dir(stage, key)
        os.makedirs(d, exist_ok=True)
        final = os.path.join(d, name)
        tmp = final + ".tmp%d" % os.getpid()
        writer(tmp)
        os.replace(tmp, final)
        return final
