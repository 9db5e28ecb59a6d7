"""Raster-order pel-recursive flow estimation and flow-file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from mnflow.hos import INTENSITY
from mnflow.imagecore import FlowField, Image, _sample, check_same_size, save_ppm
from mnflow import _kernels as _k
from mnflow.mnsolver import DivergenceError, SolverConfig, square_window

__all__ = [
    "PREDICTIONS",
    "PelRecConfig",
    "FlowDiagnostics",
    "FloError",
    "predict_displacement",
    "estimate_pixel",
    "estimate_flow",
    "write_flo",
    "read_flo",
    "flow_to_color",
    "save_flow_color",
]

PREDICTIONS = ("causal_average", "previous_pixel", "zero")
FLO_SENTINEL = 202021.25

# causal neighbors: west, north-west, north, north-east
_CAUSAL = ((-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass(frozen=True)
class PelRecConfig:
    window: int = 3
    window_shape: str = "centered"
    d_max: float = 5.0
    # longest update accepted per pixel; 0 disables the cap
    u_max: float = 1.0
    prediction: str = "causal_average"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if not self.u_max >= 0:
            raise ValueError("u_max must be non-negative")
        if self.prediction not in PREDICTIONS:
            raise ValueError(f"prediction must be one of {PREDICTIONS}")
        # validates side/shape and rejects N < 2
        if len(self.offsets()) < 2:
            raise ValueError("window must contain at least 2 pixels")

    def offsets(self) -> np.ndarray:
        return square_window(self.window, self.window_shape)


@dataclass
class FlowDiagnostics:
    iters: np.ndarray
    gamma_mean: np.ndarray
    dfd_before: float
    dfd_after: float

    @property
    def mean_iters(self) -> float:
        return float(self.iters.mean())

    @property
    def mean_gamma(self) -> float:
        return float(self.gamma_mean.mean())


def predict_displacement(flow_so_far, r, rule: str = "causal_average"):
    """Predict d at ``r = (x, y)`` from already-finalized raster-earlier vectors.

    ``flow_so_far`` is an (H, W, 2) array (or FlowField); only entries of
    earlier pixels are read.
    """
    vec = flow_so_far.vectors if isinstance(flow_so_far, FlowField) else flow_so_far
    h, w = vec.shape[:2]
    x, y = int(r[0]), int(r[1])
    if rule == "zero":
        return (0.0, 0.0)
    if rule == "previous_pixel":
        if x == 0:
            return (0.0, 0.0)
        return (float(vec[y, x - 1, 0]), float(vec[y, x - 1, 1]))
    if rule != "causal_average":
        raise ValueError(f"unknown prediction rule {rule!r}")
    sx = sy = 0.0
    n = 0
    for dx, dy in _CAUSAL:
        nx, ny = x + dx, y + dy
        if 0 <= nx < w and 0 <= ny < h:
            sx += vec[ny, nx, 0]
            sy += vec[ny, nx, 1]
            n += 1
    if n == 0:
        return (0.0, 0.0)
    return (float(sx / n), float(sy / n))


_PRED_CODES = {"causal_average": _k.PRED_CAUSAL_AVERAGE, "previous_pixel": _k.PRED_PREVIOUS,
               "zero": _k.PRED_ZERO}


def _kernel_args(config: PelRecConfig):
    s = config.solver
    if s.mode == "lms":
        gamma_mode, fixed = 0, 0.0
    elif s.mode == "lmf":
        gamma_mode, fixed = 0, 1.0
    elif s.kurtosis_mode == INTENSITY:
        gamma_mode, fixed = 2, 0.0
    else:
        gamma_mode, fixed = 1, 0.0
    return gamma_mode, fixed


def _frames(frame_k: Image, frame_km1: Image):
    return np.ascontiguousarray(frame_k.data), np.ascontiguousarray(frame_km1.data)


def estimate_pixel(frame_k: Image, frame_km1: Image, flow_so_far, r, config: PelRecConfig = PelRecConfig()):
    """Estimate the vector at one working point from raster-earlier vectors only.

    Returns ``(d, iters, gamma_mean)``. Running this at every pixel in raster
    order, writing each result back into ``flow_so_far``, is exactly what
    :func:`estimate_flow` does.
    """
    vec = flow_so_far.vectors if isinstance(flow_so_far, FlowField) else flow_so_far
    vec = np.ascontiguousarray(vec, dtype=np.float64)
    cur, prev = _frames(frame_k, frame_km1)
    h, w = cur.shape
    x, y = int(r[0]), int(r[1])
    offsets = np.ascontiguousarray(config.offsets(), dtype=np.int64)
    s = config.solver
    gamma_mode, fixed = _kernel_args(config)
    p = y * w + x
    lo = max(0, p - s.kurtosis_window + 1)
    # settled residuals of the earlier pixels in the causal kurtosis window
    pool = np.zeros((p - lo, offsets.shape[0]))
    for k, q in enumerate(range(lo, p)):
        qy, qx = divmod(q, w)
        _k.window_dfd(cur, prev, qx, qy, offsets, vec[qy, qx, 0], vec[qy, qx, 1], pool[k])
    kind = _k.GAMMA_KURTOSIS if gamma_mode == 1 else _k.GAMMA_FIXED
    if gamma_mode == 2:
        fixed = _k.intensity_gamma(cur, x, y, s.kurtosis_window, s.gamma_params.c, s.gamma_params.A)
    dx, dy, iters, gmean, _ = _k.pixel(
        cur, prev, vec, pool, x, y, offsets, float(config.d_max), float(config.u_max), _PRED_CODES[config.prediction],
        kind, fixed, s.gamma_params.c, s.gamma_params.A, s.beta0, s.eps, s.max_iters, s.tol,
        s.max_halvings)
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise DivergenceError(f"non-finite update at pixel {(x, y)}")
    return (dx, dy), iters, gmean


def _mean_abs_dfd(frame_k: Image, frame_km1: Image, vectors: np.ndarray) -> float:
    ys, xs = np.mgrid[0:frame_k.height, 0:frame_k.width].astype(np.float64)
    warped = _sample(frame_km1.data, xs - vectors[..., 0], ys - vectors[..., 1])
    return float(np.mean(np.abs(frame_k.data - warped)))


def estimate_flow(frame_k: Image, frame_km1: Image, config: PelRecConfig = PelRecConfig()):
    """Dense flow from one left-to-right, top-to-bottom pass.

    At each pixel: predict d from the causal neighbors, assemble the
    linearized neighborhood system, solve for the update u, shorten u to at
    most ``u_max`` pixels (the expansion is only trusted that far), and
    store ``clamp(d_pred + u, +-d_max)``. The scan is inherently sequential.

    Returns ``(FlowField, FlowDiagnostics)``.
    """
    check_same_size(frame_k, frame_km1)
    cur, prev = _frames(frame_k, frame_km1)
    s = config.solver
    gamma_mode, fixed = _kernel_args(config)
    try:
        vec, iters, gmean = _k.scan(
            cur, prev, np.ascontiguousarray(config.offsets(), dtype=np.int64), float(config.d_max), float(config.u_max),
            _PRED_CODES[config.prediction], gamma_mode, fixed, s.gamma_params.c, s.gamma_params.A,
            s.kurtosis_window, s.beta0, s.eps, s.max_iters, s.tol, s.max_halvings)
    except ArithmeticError as exc:
        raise DivergenceError(str(exc)) from None
    diag = FlowDiagnostics(
        iters=iters,
        gamma_mean=gmean,
        dfd_before=_mean_abs_dfd(frame_k, frame_km1, np.zeros_like(vec)),
        dfd_after=_mean_abs_dfd(frame_k, frame_km1, vec),
    )
    return FlowField(vec), diag


# -- .flo files ---------------------------------------------------------------

class FloError(ValueError):
    pass


def write_flo(flow: FlowField, path) -> None:
    """Sentinel 202021.25, int32 width and height, then row-major (u, v) float32; little-endian."""
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_SENTINEL], dtype="<f4").tobytes())
        fh.write(np.array([flow.width, flow.height], dtype="<i4").tobytes())
        fh.write(flow.vectors.astype("<f4").tobytes())


def read_flo(path) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FloError(f"{path}: file too short for a flow header")
    sentinel = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if sentinel != np.float32(FLO_SENTINEL):
        raise FloError(f"{path}: bad sentinel {sentinel!r}")
    width, height = (int(v) for v in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if width <= 0 or height <= 0:
        raise FloError(f"{path}: invalid dimensions {width}x{height}")
    need = width * height * 2
    if len(raw) - 12 < need * 4:
        raise FloError(f"{path}: truncated payload ({(len(raw) - 12) // 4} of {need} floats)")
    data = np.frombuffer(raw, dtype="<f4", count=need, offset=12)
    return FlowField(data.reshape(height, width, 2).astype(np.float64))


# -- visualization --------------------------------------------------------------

def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices = [
        np.stack([v, t, p], -1), np.stack([q, v, p], -1), np.stack([p, v, t], -1),
        np.stack([p, q, v], -1), np.stack([t, p, v], -1), np.stack([v, p, q], -1),
    ]
    out = np.zeros(h.shape + (3,))
    for k, c in enumerate(choices):
        out[i == k] = c[i == k]
    return out


def flow_to_color(flow: FlowField, max_mag=None) -> np.ndarray:
    """Color-code a flow field as an (H, W, 3) uint8 RGB array.

    Hue follows the vector direction, saturation its magnitude relative to
    ``max_mag`` (clamped at 1); value is always 1, so zero motion is white.
    ``max_mag=None`` uses the largest magnitude present.
    """
    u, v = flow.u, flow.v
    mag = np.hypot(u, v)
    if max_mag is None:
        max_mag = float(mag.max())
    elif not max_mag > 0:
        raise ValueError("max_mag must be positive")
    sat = np.zeros_like(mag) if max_mag == 0 else np.minimum(mag / max_mag, 1.0)
    hue = (np.arctan2(v, u) / (2 * math.pi)) % 1.0
    rgb = _hsv_to_rgb(hue, sat, np.ones_like(mag))
    return np.floor(rgb * 255.0 + 0.5).astype(np.uint8)


def save_flow_color(flow: FlowField, path, max_mag=None) -> None:
    save_ppm(flow_to_color(flow, max_mag), path)
