"""Append-only, content-addressed completion cache on disk."""

from __future__ import annotations

import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Optional


class PredictionCache:
    """One JSON file per cache key, under ``<root>/<key[:2]>/<key>.json``.

    Entries are never overwritten. Writes go through a temp file and an
    atomic rename, so concurrent readers never see a partial entry.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        try:
            return json.loads(self.path_for(key).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None

    def __contains__(self, key: str) -> bool:
        return self.path_for(key).exists()

    def put(self, key: str, entry: dict) -> bool:
        """Store ``entry`` unless ``key`` is already present; True if written."""
        path = self.path_for(key)
        with self._lock:
            if path.exists():
                return False
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False)
            os.replace(tmp, path)
            return True

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*/*.json"))
