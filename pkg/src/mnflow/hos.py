"""Kurtosis estimators and the kurtosis-to-gamma mixing sigmoid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "GammaParams",
    "KurtosisEstimate",
    "KurtosisUndefined",
    "RESIDUAL",
    "INTENSITY",
    "excess_kurtosis_window",
    "fourth_cumulant",
    "mean_window_kurtosis",
    "causal_intensity_window",
    "gamma_of_kurtosis",
]

RESIDUAL = "residual"
INTENSITY = "paper_literal_intensity"
KURTOSIS_MODES = (RESIDUAL, INTENSITY)

# Centered windows with RMS below this fraction of the peak magnitude count as constant.
DEGENERATE_RMS = 1e-12

_GAMMA_LO = math.nextafter(0.0, 1.0)
_GAMMA_HI = math.nextafter(1.0, 0.0)


class KurtosisUndefined(ValueError):
    """Raised when a window has no spread, so kurtosis has a zero denominator."""


class KurtosisEstimate(NamedTuple):
    chi: float
    m: int
    mode: str = RESIDUAL


@dataclass(frozen=True)
class GammaParams:
    """Sharpness ``c`` and shift ``A`` of the gamma sigmoid."""

    c: float = 1.0
    A: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.A > 0) or not (math.isfinite(self.c) and math.isfinite(self.A)):
            raise ValueError(f"gamma parameters must be positive and finite, got c={self.c}, A={self.A}")


def excess_kurtosis_window(values, m=None, *, normalized=True, mode=RESIDUAL) -> KurtosisEstimate:
    """Excess kurtosis of one window of samples.

    The window is mean-centered, then ``chi = m * sum(v**4) / sum(v**2)**2 - 3``.
    With ``normalized=False`` the leading ``m`` is dropped, which gives a
    window-size dependent value kept only for comparison runs.

    Raises
    ------
    KurtosisUndefined
        If the centered window is (numerically) all zeros.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if m is None:
        m = v.size
    if v.size != m:
        raise ValueError(f"window holds {v.size} values, expected m={m}")
    if m < 2:
        raise ValueError("kurtosis needs a window of at least 2 samples")
    v = v - v.mean()
    peak = float(np.max(np.abs(v)))
    s2 = float(np.dot(v, v))
    if peak == 0.0 or math.sqrt(s2 / m) <= DEGENERATE_RMS * float(np.max(np.abs(values))):
        raise KurtosisUndefined("window is constant after centering")
    # rescale so the fourth powers neither underflow nor overflow
    v = v / peak
    v2 = v * v
    s2 = float(v2.sum())
    s4 = float(np.dot(v2, v2))
    scale = m if normalized else 1
    return KurtosisEstimate(scale * s4 / (s2 * s2) - 3.0, m, mode)


def fourth_cumulant(values) -> float:
    """Sample fourth cumulant ``mean(v**4) - 3*mean(v**2)**2`` of centered values."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("need at least 2 samples")
    v = v - v.mean()
    m2 = float(np.mean(v * v))
    m4 = float(np.mean(v ** 4))
    return m4 - 3.0 * m2 * m2


def mean_window_kurtosis(stream, m: int, *, normalized=True) -> float:
    """Average of ``excess_kurtosis_window`` over consecutive non-overlapping windows.

    A trailing partial window is dropped; degenerate windows are skipped.
    """
    x = np.asarray(stream, dtype=np.float64).ravel()
    n = x.size // m
    if n == 0:
        raise ValueError(f"stream of {x.size} samples is shorter than one window of {m}")
    chis = []
    for w in x[: n * m].reshape(n, m):
        try:
            chis.append(excess_kurtosis_window(w, m, normalized=normalized).chi)
        except KurtosisUndefined:
            continue
    if not chis:
        raise KurtosisUndefined("every window is degenerate")
    return float(np.mean(chis))


def causal_intensity_window(data: np.ndarray, x: int, y: int, m: int = 5) -> np.ndarray:
    """The ``m`` most recent pixels in raster order, ending at (x, y).

    Near the top-left corner fewer than ``m`` pixels exist; the window is
    then shorter.
    """
    flat = np.asarray(data).ravel()
    idx = y * data.shape[1] + x
    return flat[max(0, idx - m + 1): idx + 1]


def gamma_of_kurtosis(chi: float, params: GammaParams = GammaParams()) -> float:
    """Map kurtosis to the fourth-norm weight ``exp(-c chi) / (A + exp(-c chi))``.

    Negative kurtosis drives the weight toward 1, positive toward 0. The
    result is kept strictly inside (0, 1) even where the exponential
    under- or overflows.
    """
    t = params.c * chi
    if t >= 0:
        e = math.exp(-t) if t < 745.0 else 0.0
        g = e / (params.A + e)
    else:
        g = 1.0 / (params.A * math.exp(t) + 1.0)
    return min(max(g, _GAMMA_LO), _GAMMA_HI)
