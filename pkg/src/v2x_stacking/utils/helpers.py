"""
Helper utilities for v2x-stacking.
This module provides output path handling, seeded random streams and scenario
fingerprints.
"""

import hashlib
import os
from pathlib import Path

import numpy as np

from v2x_stacking.config.settings import settings
from v2x_stacking.utils.logger import get_logger

logger = get_logger(__name__)


def get_output_path(out: str | None = None) -> Path:
    """Resolve an output directory and create it.

    Args:
        out: Directory name or path. Relative names are placed under the configured
            output folder; None uses the output folder itself.

    Returns:
        Absolute path of the created directory
    """
    if out is None:
        path = Path(settings.output_folder)
    elif os.path.isabs(out):
        path = Path(out)
    else:
        path = Path(settings.output_folder) / out
    path.mkdir(parents=True, exist_ok=True)
    logger.debug(f"Resolved output directory: {path}")
    return path.resolve()


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent random stream for one concern of a seeded scenario.

    Streams are keyed so that, e.g., initial SoC draws do not depend on whether
    traces were synthesized or read from files.
    """
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def fingerprint(*arrays) -> str:
    """SHA-256 over the bytes of the given arrays and scalars."""
    digest = hashlib.sha256()
    for item in arrays:
        arr = np.ascontiguousarray(np.asarray(item, dtype=float))
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()
