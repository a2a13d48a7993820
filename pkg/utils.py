"""Shared utilities."""

from __future__ import annotations

import hashlib
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240607


def normalize_run_id(raw: str) -> str:
    """Generate a filesystem-friendly identifier for experiment artifacts."""
    if not raw:
        return ""
    return re.sub(r"[^A-Za-z0-9_\-]", "-", raw)[:100]


def bracket(z: np.ndarray, axis: Optional[int] = -1) -> np.ndarray:
    """Japanese bracket (1 + |z|^2)^(1/2); with axis=None z is treated as scalars."""
    z = np.asarray(z, dtype=float)
    if axis is None:
        return np.sqrt(1.0 + z * z)
    return np.sqrt(1.0 + np.sum(z * z, axis=axis))


def seeded_rng(seed: Optional[int] = None) -> np.random.Generator:
    return np.random.default_rng(DEFAULT_SEED if seed is None else seed)


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def resolve_output_dir(preferred: Optional[Union[str, Path]] = None) -> Path:
    """Pick the artifact directory, falling back to the temp dir when not writable."""
    base = Path(preferred or os.getenv("TFIO_CACHE") or "runs")
    try:
        base.mkdir(parents=True, exist_ok=True)
        return base
    except OSError as exc:
        fallback = Path(tempfile.gettempdir()) / "tfio_runs"
        logger.warning("Could not create output directory %s (%s); using %s", base, exc, fallback)
        fallback.mkdir(parents=True, exist_ok=True)
        return fallback


def atomic_write(path: Path, payload: Union[str, bytes]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_suffix(path.suffix + ".tmp")
    if isinstance(payload, str):
        tmp_path.write_text(payload, encoding="utf-8")
    else:
        tmp_path.write_bytes(payload)
    tmp_path.replace(path)
