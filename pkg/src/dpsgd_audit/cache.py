"""Small content-addressed npz cache for accountant artifacts.

Calibrations and predicted curves are pure functions of their parameters but
cost seconds each; the epsilon-grid sweep of an audit touches up to ~200 of
them.  Keys are canonical-JSON parameter dicts hashed together with a format
version, values are flat dicts of floats/arrays stored as .npz.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

CACHE_FORMAT_VERSION = 1
_ENV_VAR = "DPSGD_AUDIT_CACHE"


def default_cache_dir() -> Path:
    env = os.environ.get(_ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "dpsgd-audit"


class DiskCache:
    """Maps parameter dicts to dicts of scalars/arrays, on disk."""

    def __init__(self, root: Path | str | None):
        self.root = Path(root) if root is not None else None

    def _path(self, key: dict) -> Path:
        payload = json.dumps(
            {"v": CACHE_FORMAT_VERSION, **key}, sort_keys=True, separators=(",", ":")
        )
        digest = hashlib.sha256(payload.encode()).hexdigest()[:32]
        return self.root / f"{digest}.npz"

    def get(self, key: dict) -> dict | None:
        if self.root is None:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        with np.load(path) as data:
            return {name: data[name] for name in data.files}

    def put(self, key: dict, values: dict) -> None:
        if self.root is None:
            return
        self.root.mkdir(parents=True, exist_ok=True)
        path = self._path(key)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **values)
        os.replace(tmp, path)
