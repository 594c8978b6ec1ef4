from __future__ import annotations

import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, Mapping, Union

from .datasets import Dataset, load_dataset, save_dataset
from .errors import FormatVersionMismatch
from .store import atomic_write_text, file_lock, lock_path_for

logger = logging.getLogger(__name__)

INDEX_NAME = "index.json"


def content_key(spec: Mapping[str, object]) -> str:
    """sha256 of the canonical JSON form of a dataset's generating parameters."""
    canonical = json.dumps({str(k): str(v) for k, v in spec.items()}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class DatasetCache:
    """Content-addressed dataset files plus a JSON index, single writer via a lock file."""

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root) if not isinstance(root, Path) else root
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / INDEX_NAME
        self.lock_path = lock_path_for(self.index_path)

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.qds"

    def load_index(self) -> Dict[str, Dict[str, str]]:
        if not self.index_path.exists():
            return {}
        try:
            data = json.loads(self.index_path.read_text(encoding="utf-8"))
            return data if isinstance(data, dict) else {}
        except Exception:
            return {}

    def get_or_create(self, spec: Mapping[str, object], factory: Callable[[], Dataset]) -> Dataset:
        key = content_key(spec)
        path = self.path_for(key)
        if path.exists():
            try:
                dataset = load_dataset(path)
                logger.info("dataset cache hit %s (%d rows)", key[:12], len(dataset))
                return dataset
            except (FormatVersionMismatch, OSError) as exc:
                logger.warning("discarding unreadable cached dataset %s: %s", path, exc)

        logger.info("dataset cache miss %s", key[:12])
        dataset = factory()
        with file_lock(self.lock_path):
            save_dataset(dataset, path)
            index = self.load_index()
            index[key] = {
                "file": path.name,
                "rows": str(len(dataset)),
                "created_at": datetime.now().isoformat(timespec="seconds"),
                **{str(k): str(v) for k, v in spec.items()},
            }
            atomic_write_text(self.index_path, json.dumps(index, indent=2, sort_keys=True))
        return dataset
