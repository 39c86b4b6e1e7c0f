"""Independent brute-force oracles used to pin expected metric values.

These stay deliberately naive (explicit Python loops) and share no code with
the package implementations they check.
"""

from __future__ import annotations

import math

import numpy as np


def loop_mse(a: np.ndarray, b: np.ndarray) -> float:
    fa = a.astype(np.float64) / 255.0 if a.dtype == np.uint8 else a.astype(np.float64)
    fb = b.astype(np.float64) / 255.0 if b.dtype == np.uint8 else b.astype(np.float64)
    if fa.ndim == 2:
        fa, fb = fa[..., None], fb[..., None]
    total = 0.0
    h, w, c = fa.shape
    for i in range(h):
        for j in range(w):
            for k in range(c):
                d = fa[i, j, k] - fb[i, j, k]
                total += d * d
    return total / (h * w * c)


def loop_psnr(a: np.ndarray, b: np.ndarray) -> float:
    err = loop_mse(a, b)
    if err < 1e-10:
        return 100.0
    return 10.0 * math.log10(1.0 / err)


def _gauss(window: int, sigma: float) -> np.ndarray:
    x = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def loop_ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
    sigma: float = 1.5,
) -> float:
    """Direct windowed SSIM: explicit loop over every valid window position."""
    fa = a.astype(np.float64) / 255.0 if a.dtype == np.uint8 else a.astype(np.float64)
    fb = b.astype(np.float64) / 255.0 if b.dtype == np.uint8 else b.astype(np.float64)
    if fa.ndim == 2:
        fa, fb = fa[..., None], fb[..., None]
    g1 = _gauss(window, sigma)
    weights = np.outer(g1, g1)
    c1, c2 = k1**2, k2**2
    h, w, chans = fa.shape
    channel_means = []
    for c in range(chans):
        vals = []
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                px = fa[i : i + window, j : j + window, c]
                py = fb[i : i + window, j : j + window, c]
                mx = float((weights * px).sum())
                my = float((weights * py).sum())
                vx = float((weights * px * px).sum()) - mx * mx
                vy = float((weights * py * py).sum()) - my * my
                cov = float((weights * px * py).sum()) - mx * my
                num = (2 * mx * my + c1) * (2 * cov + c2)
                den = (mx * mx + my * my + c1) * (vx + vy + c2)
                vals.append(num / den)
        channel_means.append(sum(vals) / len(vals))
    return sum(channel_means) / len(channel_means)


def rotation_y(degrees: float) -> np.ndarray:
    """Closed-form yaw matrix used as the independent pose-algebra oracle."""
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    return np.array(
        [
            [c, 0.0, s, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [-s, 0.0, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
