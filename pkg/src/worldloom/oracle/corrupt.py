"""Adversarial image corruptions used to exercise the verifier gate."""

from __future__ import annotations

import enum

import numpy as np

from ..imaging import as_float01, as_uint8


class CorruptionKind(enum.Enum):
    GAUSSIAN_NOISE = "gaussian_noise"
    CONTENT_REPLACE = "content_replace"
    SHIFT = "shift"
    LEAVE_HOLES_BLACK = "leave_holes_black"


def corrupt(
    image: np.ndarray,
    kind: CorruptionKind,
    severity: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Severity 0 is the identity for every kind; deterministic given rng."""
    if severity < 0:
        raise ValueError("severity must be >= 0")
    if severity == 0:
        return image.copy()

    if kind is CorruptionKind.GAUSSIAN_NOISE:
        noisy = as_float01(image) + rng.normal(0.0, severity, size=image.shape)
        return as_uint8(np.clip(noisy, 0.0, 1.0))

    if kind is CorruptionKind.CONTENT_REPLACE:
        # replace a random rectangle of `severity` total area with an alien
        # sinusoid pattern
        h, w = image.shape[:2]
        frac = min(severity, 1.0)
        rh = min(h, max(1, int(round(h * np.sqrt(frac)))))
        rw = min(w, max(1, int(round(w * np.sqrt(frac)))))
        top = int(rng.integers(0, h - rh + 1))
        left = int(rng.integers(0, w - rw + 1))
        yy, xx = np.mgrid[0:rh, 0:rw]
        f1, f2 = rng.uniform(0.01, 0.05, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        pattern = 0.5 + 0.45 * np.sin(2 * np.pi * (f1 * xx + f2 * yy) + phase)
        color = rng.uniform(0.2, 1.0, size=3)
        out = image.copy()
        out[top : top + rh, left : left + rw] = as_uint8(pattern[..., None] * color)
        return out

    if kind is CorruptionKind.SHIFT:
        pixels = int(round(severity))
        return np.roll(image, shift=pixels, axis=1).copy()

    if kind is CorruptionKind.LEAVE_HOLES_BLACK:
        # blacken a contiguous vertical band covering `severity` of the area,
        # simulating an inpainting model that skipped the disoccluded region
        h, w = image.shape[:2]
        band = max(1, int(round(w * min(severity, 1.0))))
        left = int(rng.integers(0, w - band + 1))
        out = image.copy()
        out[:, left : left + band] = 0
        return out

    raise ValueError(f"unknown corruption kind {kind!r}")
