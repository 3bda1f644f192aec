"""Content-addressed cache: results are keyed by the asset's byte hash, so
renames never invalidate and reruns are offline and resumable."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def asset_hash(path: str | Path) -> str:
    return hashlib.blake2b(Path(path).read_bytes(), digest_size=16).hexdigest()


class FeatureCache:
    def __init__(self, root: str | Path, namespace: str):
        self.dir = Path(root) / namespace
        self.dir.mkdir(parents=True, exist_ok=True)

    def _vector_path(self, key: str) -> Path:
        return self.dir / f"{key}.npy"

    def get_vector(self, key: str) -> np.ndarray | None:
        path = self._vector_path(key)
        if not path.exists():
            return None
        return np.load(path)

    def put_vector(self, key: str, vector: np.ndarray) -> None:
        tmp = self.dir / f"{key}.npy.tmp"
        with tmp.open("wb") as handle:  # np.save on a path would append .npy
            np.save(handle, np.asarray(vector, dtype=np.float32))
        tmp.replace(self._vector_path(key))

    def _text_path(self, key: str) -> Path:
        return self.dir / f"{key}.txt"

    def get_text(self, key: str) -> str | None:
        path = self._text_path(key)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put_text(self, key: str, text: str) -> None:
        tmp = self._text_path(key).with_suffix(".txt.tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(self._text_path(key))
