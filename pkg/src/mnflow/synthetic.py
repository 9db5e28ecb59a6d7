"""Synthetic textured frame pairs with known uniform motion."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from mnflow.imagecore import Image

__all__ = ["texture", "shifted_pair"]


def texture(height: int, width: int, seed: int = 0, smoothness: float = 2.0) -> np.ndarray:
    """Smoothed white noise rescaled to [0.1, 0.9]."""
    rng = np.random.default_rng(seed)
    t = gaussian_filter(rng.standard_normal((height, width)), smoothness, mode="wrap")
    t -= t.min()
    t /= t.max()
    return 0.1 + 0.8 * t


def shifted_pair(size=64, shift=(1, 0), seed: int = 0, smoothness: float = 2.0):
    """``(frame_k, frame_km1)`` with ``frame_k(x, y) = frame_km1(x - sx, y - sy)``.

    Integer shifts only; both frames are crops of one larger texture, so no
    border pixels are invented.
    """
    sx, sy = int(shift[0]), int(shift[1])
    if isinstance(size, int):
        size = (size, size)
    h, w = size
    pad = max(abs(sx), abs(sy))
    big = texture(h + 2 * pad, w + 2 * pad, seed, smoothness)
    prev = big[pad:pad + h, pad:pad + w]
    cur = big[pad - sy:pad - sy + h, pad - sx:pad - sx + w]
    return Image(cur), Image(prev)
