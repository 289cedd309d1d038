"""Photometric losses and image-quality metrics with analytic gradients."""

import math
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import ImageBuffer

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03
DYNAMIC_RANGE = 1.0
C1 = (K1 * DYNAMIC_RANGE) ** 2
C2 = (K2 * DYNAMIC_RANGE) ** 2
PSNR_CAP = 99.0


class DimensionMismatchError(ValueError):
    """Raised when two images (or pair channels) differ in shape."""

    def __init__(self, a_shape, b_shape, what: str = "images"):
        super().__init__(f"Dimension mismatch between {what}: {tuple(a_shape)} vs {tuple(b_shape)}")
        self.a_shape = tuple(a_shape)
        self.b_shape = tuple(b_shape)


def _pair(a: ImageBuffer, b: ImageBuffer) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(a.shape, b.shape)
    return a, b


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    """Normalized 1-D Gaussian taps."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _correlate(x: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    windows = sliding_window_view(x, len(k), axis=axis)
    return np.einsum("...t,t->...", windows, k)


def _filter(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 'valid' Gaussian filtering over rows and columns."""
    return _correlate(_correlate(x, k, 0), k, 1)


def _filter_adjoint(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    pad = len(k) - 1
    g = np.pad(g, ((0, 0), (pad, pad), (0, 0)))
    g = _correlate(g, k[::-1], 1)
    g = np.pad(g, ((pad, pad), (0, 0), (0, 0)))
    return _correlate(g, k[::-1], 0)


def l1_loss(a: ImageBuffer, b: ImageBuffer) -> Tuple[float, np.ndarray]:
    """Mean absolute difference and its (sub)gradient w.r.t. ``a``; ties give 0."""
    a, b = _pair(a, b)
    diff = a - b
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def _ssim_terms(a: np.ndarray, b: np.ndarray):
    if a.ndim != 3 or a.shape[0] < WINDOW_SIZE or a.shape[1] < WINDOW_SIZE:
        raise ValueError(f"SSIM needs images of at least {WINDOW_SIZE}x{WINDOW_SIZE} with 3 channels, got {a.shape}")
    k = gaussian_window()
    mu_a = _filter(a, k)
    mu_b = _filter(b, k)
    var_a = _filter(a * a, k) - mu_a * mu_a
    var_b = _filter(b * b, k) - mu_b * mu_b
    cov = _filter(a * b, k) - mu_a * mu_b
    A1 = 2.0 * mu_a * mu_b + C1
    A2 = 2.0 * cov + C2
    B1 = mu_a * mu_a + mu_b * mu_b + C1
    B2 = var_a + var_b + C2
    return k, mu_a, mu_b, A1, A2, B1, B2


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean SSIM over valid window positions and channels."""
    a, b = _pair(a, b)
    _, _, _, A1, A2, B1, B2 = _ssim_terms(a, b)
    return float(np.mean((A1 * A2) / (B1 * B2)))


def dssim_loss(a: ImageBuffer, b: ImageBuffer) -> Tuple[float, np.ndarray]:
    """``1 - SSIM(a, b)`` and its gradient w.r.t. ``a``.

    The gradient goes through the filtered moments: with
    ``S = A1*A2 / (B1*B2)`` the map depends on ``a`` via ``mu_a``,
    ``E[a^2]`` and ``E[a*b]``, and each of those is pulled back through
    the adjoint of the window filter.
    """
    a, b = _pair(a, b)
    k, mu_a, mu_b, A1, A2, B1, B2 = _ssim_terms(a, b)
    S = (A1 * A2) / (B1 * B2)
    scale = -1.0 / S.size

    d_mu = scale * S * (2.0 * mu_b / A1 - 2.0 * mu_b / A2 - 2.0 * mu_a / B1 + 2.0 * mu_a / B2)
    d_aa = scale * (-S / B2)
    d_ab = scale * (2.0 * S / A2)

    grad = _filter_adjoint(d_mu, k) + 2.0 * a * _filter_adjoint(d_aa, k) + b * _filter_adjoint(d_ab, k)
    return 1.0 - float(np.mean(S)), grad


def mse(a: ImageBuffer, b: ImageBuffer) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a: ImageBuffer, b: ImageBuffer) -> float:
    """Peak signal-to-noise ratio in dB for unit range, capped at 99 dB."""
    err = mse(a, b)
    if err <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(DYNAMIC_RANGE ** 2 / err))
