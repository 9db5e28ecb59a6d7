"""Per-pixel mixed L2/L4 displacement-update solver.

For a working point the linearized observations ``z = G u + n`` are
assembled over a small neighborhood, then ``u`` is found by steepest
descent on

    J(u) = (1 - gamma) * ||z - G u||_2^2 + gamma * ||z - G u||_4^4

where ``gamma`` is either pinned (0 for LMS, 1 for LMF) or recomputed every
iteration from the kurtosis of the current residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from mnflow.hos import (
    INTENSITY,
    KURTOSIS_MODES,
    RESIDUAL,
    GammaParams,
    KurtosisUndefined,
    excess_kurtosis_window,
    gamma_of_kurtosis,
)
from mnflow.imagecore import Image, _gradient, _sample

__all__ = [
    "MODES",
    "ObservationSystem",
    "SolverConfig",
    "UpdateResult",
    "DivergenceError",
    "square_window",
    "assemble",
    "mixed_norm_cost",
    "mixed_norm_gradient",
    "fixed_gamma",
    "kurtosis_gamma",
    "gamma_source_for",
    "solve_update",
]

MODES = ("lms", "lmf", "adaptive")

GammaSource = Callable[[np.ndarray], float]


class DivergenceError(ArithmeticError):
    """Non-finite values appeared during the descent."""


@dataclass(frozen=True, eq=False)
class ObservationSystem:
    """Stacked observations ``z`` (N,), design matrix ``G`` (N, 2) and the
    integer pixel coordinates (N, 2) they were taken at."""

    z: np.ndarray
    G: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64).ravel()
        G = np.asarray(self.G, dtype=np.float64)
        if G.ndim != 2 or G.shape != (z.size, 2):
            raise ValueError(f"G must have shape ({z.size}, 2), got {G.shape}")
        if z.size < 2:
            raise ValueError("need at least 2 observations for 2 unknowns")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(G))):
            raise ValueError("observation system has non-finite entries")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "coords", np.asarray(self.coords))

    @property
    def n(self) -> int:
        return self.z.size


@dataclass(frozen=True)
class SolverConfig:
    beta0: float = 1.0
    gamma_params: GammaParams = field(default_factory=GammaParams)
    mode: str = "adaptive"
    max_iters: int = 50
    tol: float = 1e-4
    kurtosis_mode: str = RESIDUAL
    kurtosis_window: int = 5
    eps: float = 1e-8
    max_halvings: int = 20

    def __post_init__(self):
        if not self.beta0 > 0:
            raise ValueError("beta0 must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kurtosis_mode not in KURTOSIS_MODES:
            raise ValueError(f"kurtosis_mode must be one of {KURTOSIS_MODES}")
        if self.kurtosis_window < 2:
            raise ValueError("kurtosis window must hold at least 2 samples")


@dataclass(frozen=True)
class UpdateResult:
    u: np.ndarray
    iters: int
    final_cost: float
    gamma_trace: tuple
    converged: bool
    initial_cost: float = math.nan

    @property
    def mean_gamma(self) -> float:
        return float(np.mean(self.gamma_trace)) if self.gamma_trace else math.nan


def square_window(w: int = 3, shape: str = "centered") -> np.ndarray:
    """Offsets (dx, dy) of a ``w`` x ``w`` neighborhood in row-major order.

    ``centered`` puts the working point in the middle; ``causal`` uses the
    current row and the ``w - 1`` rows above it.
    """
    if w < 1:
        raise ValueError("window side must be >= 1")
    if shape == "centered":
        if w % 2 == 0:
            raise ValueError("centered windows need an odd side")
        half = w // 2
        dys = range(-half, half + 1)
    elif shape == "causal":
        dys = range(-(w - 1), 1)
    else:
        raise ValueError(f"unknown window shape {shape!r}")
    half_x = (w - 1) // 2
    return np.array([(dx, dy) for dy in dys for dx in range(-half_x, w - half_x)], dtype=np.intp)


def assemble(frame_k: Image, frame_km1: Image, r, d_pred, window) -> ObservationSystem:
    """Linearize the DFD about ``r - d_pred`` at every neighborhood point.

    ``z_j`` is the DFD at ``r_j`` with the predicted displacement. Because
    ``I_{k-1}(r - d_pred - u) ~ I_{k-1}(r - d_pred) - u . grad``, row ``j`` of
    ``G`` is the *negated* spatial gradient of the previous frame at
    ``r_j - d_pred``; this makes ``d = d_pred + u``.
    Neighborhood points falling off the frame are clamped to the border.
    """
    offsets = np.asarray(window, dtype=np.intp).reshape(-1, 2)
    if offsets.shape[0] < 2:
        raise ValueError("neighborhood must contain at least 2 points")
    h, w = frame_k.shape
    xs = np.clip(int(r[0]) + offsets[:, 0], 0, w - 1)
    ys = np.clip(int(r[1]) + offsets[:, 1], 0, h - 1)
    px = xs - float(d_pred[0])
    py = ys - float(d_pred[1])
    prev = frame_km1.data
    z = frame_k.data[ys, xs] - _sample(prev, px, py)
    gx, gy = _gradient(prev, px, py)
    G = -np.column_stack((gx, gy))
    return ObservationSystem(z, G, np.column_stack((xs, ys)))


def _cost(res: np.ndarray, gamma: float) -> float:
    r2 = res * res
    return (1.0 - gamma) * float(r2.sum()) + gamma * float((r2 * r2).sum())


def mixed_norm_cost(obs: ObservationSystem, u, gamma: float) -> float:
    """``(1 - gamma) * sum(r**2) + gamma * sum(r**4)`` with ``r = z - G u``."""
    return _cost(obs.z - obs.G @ np.asarray(u, dtype=np.float64), gamma)


def mixed_norm_gradient(obs: ObservationSystem, u, gamma: float) -> np.ndarray:
    """Gradient of the cost with ``gamma`` held fixed (its own u-derivative is dropped)."""
    res = obs.z - obs.G @ np.asarray(u, dtype=np.float64)
    return -2.0 * (1.0 - gamma) * (obs.G.T @ res) - 4.0 * gamma * (obs.G.T @ res ** 3)


def fixed_gamma(value: float) -> GammaSource:
    def source(residuals):
        return value
    return source


def kurtosis_gamma(params: GammaParams = GammaParams(), history=None, *,
                   normalized: bool = True) -> GammaSource:
    """Gamma from the excess kurtosis of the current residuals.

    ``history`` holds residuals already settled at earlier pixels of the
    causal window; they are pooled with the current residuals because a
    kurtosis taken over a single 9-sample neighborhood is strongly biased
    toward negative values. A pool without spread carries no shape
    information and is treated as Gaussian (kurtosis 0).
    """
    hist = np.empty(0) if history is None else np.asarray(history, dtype=np.float64).ravel()

    def source(residuals):
        pool = np.concatenate((hist, np.asarray(residuals, dtype=np.float64).ravel()))
        try:
            chi = excess_kurtosis_window(pool, normalized=normalized).chi
        except KurtosisUndefined:
            chi = 0.0
        return gamma_of_kurtosis(chi, params)
    return source


def gamma_source_for(config: SolverConfig, intensities: Optional[np.ndarray] = None,
                     history=None) -> GammaSource:
    """Build the gamma source matching ``config.mode``.

    In adaptive mode with the intensity kurtosis mode, ``intensities`` is the
    causal window of current-frame intensities; gamma is then constant over
    the iterations for this pixel. In residual mode ``history`` is passed
    on to :func:`kurtosis_gamma`.
    """
    if config.mode == "lms":
        return fixed_gamma(0.0)
    if config.mode == "lmf":
        return fixed_gamma(1.0)
    if config.kurtosis_mode == INTENSITY:
        if intensities is None:
            raise ValueError("intensity kurtosis mode needs the causal intensity window")
        try:
            chi = excess_kurtosis_window(intensities, normalized=False, mode=INTENSITY).chi
        except (KurtosisUndefined, ValueError):
            chi = 0.0
        return fixed_gamma(gamma_of_kurtosis(chi, config.gamma_params))
    return kurtosis_gamma(config.gamma_params, history)


def solve_update(obs: ObservationSystem, config: SolverConfig = SolverConfig(),
                 gamma_source: Optional[GammaSource] = None) -> UpdateResult:
    """Steepest descent for the displacement update, starting at ``u = 0``.

    Each iteration takes

        u += beta * G^T [(1 - gamma) I + 2 gamma P] (z - G u),   P = diag((z - G u)**2)

    with ``beta = beta0 / (eps + ||G||_F^2)``. A step that would raise the
    cost (at the current gamma) is halved up to ``max_halvings`` times; if
    none is acceptable the iteration stops. Iteration also stops once the
    step norm drops below ``tol``.
    """
    if gamma_source is None:
        gamma_source = gamma_source_for(config)
    z, G = obs.z, obs.G
    gx = np.ascontiguousarray(G[:, 0])
    gy = np.ascontiguousarray(G[:, 1])
    beta = config.beta0 / (config.eps + float(np.sum(G * G)))
    ux = uy = 0.0
    res = z.copy()
    trace = []
    converged = False
    iters = 0
    gamma = 0.0
    for iters in range(1, config.max_iters + 1):
        gamma = float(gamma_source(res))
        trace.append(gamma)
        cost = _cost(res, gamma)
        weighted = (1.0 - gamma) * res + 2.0 * gamma * res ** 3
        sx = beta * float(gx @ weighted)
        sy = beta * float(gy @ weighted)
        if not (math.isfinite(sx) and math.isfinite(sy)):
            raise DivergenceError("non-finite update step")
        accepted = False
        for _ in range(config.max_halvings + 1):
            new_res = res - gx * sx - gy * sy
            if _cost(new_res, gamma) <= cost:
                accepted = True
                break
            sx *= 0.5
            sy *= 0.5
        if not accepted:
            converged = True
            break
        ux += sx
        uy += sy
        res = new_res
        if math.hypot(sx, sy) < config.tol:
            converged = True
            break
    u = np.array([ux, uy])
    final_cost = _cost(res, gamma)
    initial_cost = _cost(z, gamma)
    if not math.isfinite(final_cost):
        raise DivergenceError("non-finite cost")
    if final_cost > initial_cost:
        # gamma drifted between iterations; never hand back a worse-than-start update
        u = np.zeros(2)
        final_cost = initial_cost
    return UpdateResult(u, iters, final_cost, tuple(trace), converged, initial_cost)
