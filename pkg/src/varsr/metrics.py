"""Luminance-domain image quality metrics: PSNR and single-scale SSIM.

PSNR is 10*log10(peak^2 / MSE), positive infinity when the planes are
identical. SSIM uses the canonical single-scale setup: 11x11 Gaussian
window with sigma 1.5, C1 = (0.01*peak)^2, C2 = (0.03*peak)^2, combined
luminance-contrast-structure form, averaged over windows lying fully inside
the image (no padding or border extension).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInput, InvalidParameter, ShapeMismatch

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class QualityScore:
    psnr_db: float  # math.inf when the planes are identical
    ssim: float


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"planes differ in size: {a.shape} vs {b.shape}")
    if a.ndim != 2 or a.size == 0:
        raise ShapeMismatch(f"expected nonempty 2-D planes, got shape {a.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; inf when the planes match exactly."""
    if not peak > 0:
        raise InvalidParameter(f"peak must be positive, got {peak}")
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g1 = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    win = np.outer(g1, g1)
    return win / win.sum()


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean structural similarity over all fully-interior 11x11 windows."""
    if not peak > 0:
        raise InvalidParameter(f"peak must be positive, got {peak}")
    a, b = _check_pair(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise DegenerateInput(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    win = _gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    wa = sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    wb = sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = np.einsum("hwij,ij->hw", wa, win, optimize=True)
    mu_b = np.einsum("hwij,ij->hw", wb, win, optimize=True)
    e_aa = np.einsum("hwij,hwij,ij->hw", wa, wa, win, optimize=True)
    e_bb = np.einsum("hwij,hwij,ij->hw", wb, wb, win, optimize=True)
    e_ab = np.einsum("hwij,hwij,ij->hw", wa, wb, win, optimize=True)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def score_pair(original, reconstructed) -> QualityScore:
    """PSNR and SSIM of a reconstruction against its original, peak 1.0."""
    return QualityScore(
        psnr_db=psnr(original, reconstructed), ssim=ssim(original, reconstructed)
    )


def format_score(score: QualityScore) -> str:
    """Render as "PSNR/SSIM" with 2 and 3 decimal places, e.g. "32.54/0.940"."""
    p = "inf" if math.isinf(score.psnr_db) else f"{score.psnr_db:.2f}"
    return f"{p}/{score.ssim:.3f}"
