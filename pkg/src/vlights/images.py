"""PNG image and mask I/O."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import BinaryMask


def load_rgb(path) -> np.ndarray:
    """Load an image file as an (H, W, 3) uint8 array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_rgb(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_mask(path) -> BinaryMask:
    """Load a single-channel PNG as a mask; any nonzero pixel is a light pixel."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(arr > 0)


def save_mask(path, mask: BinaryMask) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    arr = np.where(mask.pixels, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")
