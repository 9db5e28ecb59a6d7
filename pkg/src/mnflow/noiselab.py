"""SNR-targeted noise injection and image quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mnflow.imagecore import Image, check_same_size

__all__ = [
    "FAMILIES",
    "NoiseSpec",
    "SnrReport",
    "parse_family",
    "sample_noise",
    "degrade_to_snr",
    "snr_between",
]

FAMILIES = ("gaussian", "laplacian", "uniform")


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean noise description.

    ``family`` is one of FAMILIES or ``"mixture"``; a mixture draws
    ``a*n1 + b*n2`` with ``n1`` from ``family1`` and ``n2`` from ``family2``,
    scaled so the sum has the requested ``variance``.
    """

    family: str
    variance: float
    seed: Optional[int] = None
    a: float = 1.0
    family1: Optional[str] = None
    b: float = 1.0
    family2: Optional[str] = None

    def __post_init__(self):
        if not (self.variance > 0) or not math.isfinite(self.variance):
            raise ValueError(f"noise variance must be positive, got {self.variance}")
        if self.family == "mixture":
            if self.family1 not in FAMILIES or self.family2 not in FAMILIES:
                raise ValueError(f"mixture components must be in {FAMILIES}")
            if not (self.a > 0 and self.b > 0):
                raise ValueError("mixture weights must be positive")
        elif self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")

    @property
    def label(self) -> str:
        if self.family == "mixture":
            return f"mix:{self.a:g},{self.family1},{self.b:g},{self.family2}"
        return self.family

    def with_variance(self, variance: float) -> "NoiseSpec":
        return NoiseSpec(self.family, variance, self.seed, self.a, self.family1, self.b, self.family2)


@dataclass(frozen=True)
class SnrReport:
    signal_variance: float
    noise_variance: float
    snr_db: float
    mse: float
    psnr_db: float


def parse_family(text: str) -> NoiseSpec:
    """Parse ``gaussian|laplacian|uniform|mix:a,f1,b,f2`` into a unit-variance spec."""
    text = text.strip().lower()
    if text.startswith("mix:"):
        parts = text[4:].split(",")
        if len(parts) != 4:
            raise ValueError(f"mixture must be mix:a,family1,b,family2, got {text!r}")
        a, f1, b, f2 = parts
        return NoiseSpec("mixture", 1.0, a=float(a), family1=f1, b=float(b), family2=f2)
    return NoiseSpec(text, 1.0)


def _unit(family: str, rng: np.random.Generator, count: int) -> np.ndarray:
    if family == "gaussian":
        return rng.standard_normal(count)
    if family == "laplacian":
        # inverse CDF of Laplace(0, b) with b = sqrt(1/2)
        p = rng.uniform(-0.5, 0.5, count)
        return -math.sqrt(0.5) * np.sign(p) * np.log1p(-2.0 * np.abs(p))
    if family == "uniform":
        half = math.sqrt(3.0)
        return rng.uniform(-half, half, count)
    raise ValueError(f"unknown noise family {family!r}")


def sample_noise(spec: NoiseSpec, count: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Draw ``count`` i.i.d. zero-mean samples with population variance ``spec.variance``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.family == "mixture":
        n1 = _unit(spec.family1, rng, count)
        n2 = _unit(spec.family2, rng, count)
        # var(a n1 + b n2) = a^2 + b^2 for unit-variance components
        scale = math.sqrt(spec.variance / (spec.a ** 2 + spec.b ** 2))
        return scale * (spec.a * n1 + spec.b * n2)
    return math.sqrt(spec.variance) * _unit(spec.family, rng, count)


def degrade_to_snr(image: Image, family, target_snr_db: float, seed: Optional[int] = None):
    """Add zero-mean noise so that ``10 log10(var(image) / var(noise)) == target_snr_db``.

    ``family`` is a family name, a ``mix:...`` string, or a NoiseSpec whose
    variance is ignored. The drawn realization is re-centered and rescaled
    to the exact target variance, so the achieved SNR matches the target up
    to rounding. Returned intensities are not clamped.

    Returns ``(noisy_image, spec)``.
    """
    if not math.isfinite(target_snr_db):
        raise ValueError("target SNR must be finite")
    signal_var = float(np.var(image.data))
    if signal_var <= 0.0:
        raise ValueError("cannot target an SNR on a constant image")
    base = parse_family(family) if isinstance(family, str) else family
    noise_var = signal_var / 10.0 ** (target_snr_db / 10.0)
    if noise_var <= 0.0:
        return Image(image.data), NoiseSpec(base.family, math.ulp(0.0), seed, base.a, base.family1, base.b, base.family2)
    spec = NoiseSpec(base.family, noise_var, seed, base.a, base.family1, base.b, base.family2)
    noise = sample_noise(spec, image.data.size)
    noise -= noise.mean()
    drawn = float(np.var(noise))
    if drawn > 0.0:
        noise *= math.sqrt(noise_var / drawn)
    return Image(image.data + noise.reshape(image.shape)), spec


def snr_between(clean: Image, degraded: Image) -> SnrReport:
    """SNR (signal variance over error variance), MSE, and PSNR with peak 1.0.

    A zero error reports ``inf`` for both SNR and PSNR.
    """
    check_same_size(clean, degraded, "images")
    err = degraded.data - clean.data
    signal_var = float(np.var(clean.data))
    noise_var = float(np.var(err))
    mse = float(np.mean(err * err))
    if noise_var == 0.0:
        snr = math.inf
    elif signal_var == 0.0:
        snr = -math.inf
    else:
        snr = 10.0 * math.log10(signal_var / noise_var)
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    return SnrReport(signal_var, noise_var, snr, mse, psnr)
