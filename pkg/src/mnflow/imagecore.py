"""Grayscale frames, PGM I/O, bilinear sampling, gradients and backward warping.

Intensities are stored as float64 in [0, 1] (8-bit files are divided by 255
on load). Sampling outside the frame clamps to the border pixel.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image",
    "FlowField",
    "PgmError",
    "MalformedHeaderError",
    "UnsupportedMaxvalError",
    "TruncatedPayloadError",
    "load_pgm",
    "save_pgm",
    "to_bytes",
    "bilinear_sample",
    "spatial_gradient",
    "dfd",
    "motion_compensate",
]

# Half-pixel step for central differences on the bilinear surface.
GRADIENT_STEP = 0.5


class PgmError(ValueError):
    """Base class for PGM parse failures."""


class MalformedHeaderError(PgmError):
    pass


class UnsupportedMaxvalError(PgmError):
    pass


class TruncatedPayloadError(PgmError):
    pass


def _frozen(arr, dtype=np.float64):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """Single-channel frame; ``data`` has shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2 or data.size == 0:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image intensities must be finite")
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement ``vectors[y, x] = (d_x, d_y)`` in pixels."""

    vectors: np.ndarray

    def __post_init__(self):
        vec = _frozen(self.vectors)
        if vec.ndim != 3 or vec.shape[2] != 2:
            raise ValueError(f"flow vectors must have shape (H, W, 2), got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("flow vectors must be finite")
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width, 2)))

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def u(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def v(self) -> np.ndarray:
        return self.vectors[..., 1]

    def __eq__(self, other):
        return isinstance(other, FlowField) and np.array_equal(self.vectors, other.vectors)


# -- PGM ---------------------------------------------------------------------

_HEADER_RE = re.compile(rb"^P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def load_pgm(path) -> Image:
    """Read a binary (P5) PGM with maxval 255."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise MalformedHeaderError(f"{path}: not a binary PGM (magic {raw[:2]!r})")
    m = _HEADER_RE.match(raw)
    if m is None:
        raise MalformedHeaderError(f"{path}: malformed PGM header")
    width, height, maxval = (int(g) for g in m.groups())
    if width <= 0 or height <= 0:
        raise MalformedHeaderError(f"{path}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"{path}: maxval {maxval} unsupported (need 255)")
    payload = raw[m.end():]
    need = width * height
    if len(payload) < need:
        raise TruncatedPayloadError(f"{path}: expected {need} bytes of pixel data, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8, count=need).reshape(height, width)
    return Image(pixels / 255.0)


def to_bytes(data) -> np.ndarray:
    """Quantize intensities to uint8: clamp to [0, 1], scale, round half away from zero."""
    data = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    # all values are non-negative here, so floor(x + 0.5) is half-away-from-zero
    return np.floor(data * 255.0 + 0.5).astype(np.uint8)


def save_pgm(image: Image, path) -> None:
    pixels = to_bytes(image.data)
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())


def save_ppm(rgb: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected an (H, W, 3) uint8 array")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())


# -- sampling ----------------------------------------------------------------

def _sample(data: np.ndarray, x, y):
    """Bilinear sample of a raw 2-D array at (possibly array-valued) x, y."""
    h, w = data.shape
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x), max(w - 2, 0)).astype(np.intp)
    y0 = np.minimum(np.floor(y), max(h - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = data[y0, x0] + fx * (data[y0, x1] - data[y0, x0])
    bot = data[y1, x0] + fx * (data[y1, x1] - data[y1, x0])
    out = top + fy * (bot - top)
    return out if out.ndim else float(out)


def _gradient(data: np.ndarray, x, y):
    h = GRADIENT_STEP
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gx = (_sample(data, x + h, y) - _sample(data, x - h, y)) / (2 * h)
    gy = (_sample(data, x, y + h) - _sample(data, x, y - h)) / (2 * h)
    return gx, gy


def bilinear_sample(image: Image, x, y):
    """Interpolate ``image`` at real-valued column ``x`` and row ``y``.

    Scalars give a float; arrays are broadcast and give an array.
    Coordinates outside the frame are clamped to the border.
    """
    return _sample(image.data, x, y)


def spatial_gradient(image: Image, x, y):
    """Central differences of the bilinear surface with half-pixel step."""
    return _gradient(image.data, x, y)


def dfd(frame_k: Image, frame_km1: Image, r, d) -> float:
    """Displaced frame difference ``I_k(r) - I_{k-1}(r - d)`` at integer point ``r``."""
    x, y = int(r[0]), int(r[1])
    return float(frame_k.data[y, x] - _sample(frame_km1.data, x - d[0], y - d[1]))


def motion_compensate(frame_km1: Image, flow: FlowField) -> Image:
    """Backward-warp the previous frame: ``out(r) = I_{k-1}(r - d(r))``."""
    if (flow.height, flow.width) != frame_km1.shape:
        raise ValueError(
            f"flow is {flow.width}x{flow.height} but frame is {frame_km1.width}x{frame_km1.height}"
        )
    ys, xs = np.mgrid[0:frame_km1.height, 0:frame_km1.width].astype(np.float64)
    return Image(_sample(frame_km1.data, xs - flow.u, ys - flow.v))


def check_same_size(a, b, what="frames"):
    if a.shape != b.shape:
        raise ValueError(f"{what} differ in size: {a.shape[1]}x{a.shape[0]} vs {b.shape[1]}x{b.shape[0]}")

