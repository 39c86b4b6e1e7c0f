"""Render-back quality metrics: MSE, PSNR, SSIM and the global profile."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionMismatch, EmptyInput, ImageTooSmall, ProtocolError
from .imaging import as_float01, require_same_shape

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
_PSNR_MSE_FLOOR = 1e-10


@dataclass(frozen=True)
class MetricTriple:
    """Per-frame render-back scores. lpips is None when no backend computed it."""

    psnr: float
    ssim: float
    lpips: float | None = None


@dataclass(frozen=True)
class ProfileSummary:
    min_psnr: float
    mean_psnr: float
    min_ssim: float
    mean_ssim: float
    min_lpips: float | None
    mean_lpips: float | None


@dataclass(frozen=True)
class GlobalProfile:
    """Metric triples for frames 1..t+1 of a provisional world, plus min/mean."""

    per_frame: tuple[MetricTriple, ...]
    summary: ProfileSummary


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference over all pixels and channels, on [0,1] data."""
    require_same_shape(a, b)
    fa, fb = as_float01(a), as_float01(b)
    return float(np.mean((fa - fb) ** 2))


def masked_mse(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """MSE restricted to pixels where mask is true."""
    require_same_shape(a, b)
    if mask.shape != a.shape[:2]:
        raise DimensionMismatch(f"mask shape {mask.shape} vs image {a.shape[:2]}")
    if not mask.any():
        raise EmptyInput("mask selects no pixels")
    fa, fb = as_float01(a), as_float01(b)
    return float(np.mean(((fa - fb) ** 2)[mask]))


def _psnr_from_mse(err: float) -> float:
    if err < _PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / err), PSNR_CAP_DB)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against peak 1.0, capped at 100 dB."""
    return _psnr_from_mse(mse(a, b))


def masked_psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    return _psnr_from_mse(masked_mse(a, b, mask))


def gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    x = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2-D plane with kernel g x g."""
    w = g.size
    rows = sliding_window_view(plane, w, axis=0) @ g
    return sliding_window_view(rows, w, axis=1) @ g


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
    sigma: float = 1.5,
) -> float:
    """Mean structural similarity with a Gaussian window, per channel, averaged.

    Local statistics are Gaussian-weighted and the SSIM map is taken over
    valid window positions only (no padding), matching the classic formulation.
    """
    require_same_shape(a, b)
    if a.shape[0] < window or a.shape[1] < window:
        raise ImageTooSmall(f"image {a.shape[:2]} smaller than {window}x{window} window")
    fa, fb = as_float01(a), as_float01(b)
    if fa.ndim == 2:
        fa, fb = fa[..., None], fb[..., None]
    g = gaussian_kernel(window, sigma)
    c1, c2 = k1**2, k2**2

    values = []
    for c in range(fa.shape[2]):
        x, y = fa[:, :, c], fb[:, :, c]
        mu_x = _filter_valid(x, g)
        mu_y = _filter_valid(y, g)
        var_x = _filter_valid(x * x, g) - mu_x**2
        var_y = _filter_valid(y * y, g) - mu_y**2
        cov = _filter_valid(x * y, g) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


def frame_profile(input_img: np.ndarray, rendered: np.ndarray, lpips_backend=None) -> MetricTriple:
    """PSNR and SSIM always; LPIPS only when a backend handle works.

    A failing LPIPS backend is non-fatal: the triple carries None and a
    warning is logged.
    """
    require_same_shape(input_img, rendered)
    p = psnr(input_img, rendered)
    s = ssim(input_img, rendered)
    lp = None
    if lpips_backend is not None:
        try:
            lp = float(lpips_backend.lpips(input_img, rendered))
        except ProtocolError as exc:
            logger.warning("lpips backend unavailable, recording metric as absent: %s", exc)
    return MetricTriple(psnr=p, ssim=s, lpips=lp)


def _min_mean(values: list[float | None]) -> tuple[float | None, float | None]:
    present = [v for v in values if v is not None]
    if not present:
        return None, None
    return min(present), sum(present) / len(present)


def global_profile(pairs, lpips_backend=None) -> GlobalProfile:
    """Fold frame profiles over (input, rendered) pairs, in input order."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("global profile needs at least one frame pair")
    triples = tuple(frame_profile(a, b, lpips_backend) for a, b in pairs)
    min_p, mean_p = _min_mean([t.psnr for t in triples])
    min_s, mean_s = _min_mean([t.ssim for t in triples])
    min_l, mean_l = _min_mean([t.lpips for t in triples])
    return GlobalProfile(
        per_frame=triples,
        summary=ProfileSummary(min_p, mean_p, min_s, mean_s, min_l, mean_l),
    )


def profile_from_triples(triples) -> GlobalProfile:
    """Build a profile from precomputed triples (deterministic ordered fold)."""
    triples = tuple(triples)
    if not triples:
        raise EmptyInput("global profile needs at least one triple")
    min_p, mean_p = _min_mean([t.psnr for t in triples])
    min_s, mean_s = _min_mean([t.ssim for t in triples])
    min_l, mean_l = _min_mean([t.lpips for t in triples])
    return GlobalProfile(
        per_frame=triples,
        summary=ProfileSummary(min_p, mean_p, min_s, mean_s, min_l, mean_l),
    )


def _fmt(v: float | None, digits: int = 4) -> str:
    return "-" if v is None else f"{v:.{digits}f}"


def format_metric_table(profile: GlobalProfile) -> str:
    """Plain-text serialization of the profile sent to the 3D verifier VLM."""
    lines = ["RENDER-BACK METRIC TABLE", "frame  psnr_db   ssim     lpips"]
    for i, t in enumerate(profile.per_frame, start=1):
        lines.append(f"{i:<6d} {t.psnr:<9.4f} {t.ssim:<8.4f} {_fmt(t.lpips)}")
    s = profile.summary
    lines.append(
        "summary:"
        f" min_psnr={_fmt(s.min_psnr)} mean_psnr={_fmt(s.mean_psnr)}"
        f" min_ssim={_fmt(s.min_ssim)} mean_ssim={_fmt(s.mean_ssim)}"
        f" min_lpips={_fmt(s.min_lpips)} mean_lpips={_fmt(s.mean_lpips)}"
    )
    return "\n".join(lines)


def parse_metric_summary(table: str) -> dict[str, float | None]:
    """Inverse of format_metric_table's summary line; used by the threshold VLM."""
    for line in table.splitlines():
        if line.startswith("summary:"):
            out: dict[str, float | None] = {}
            for token in line.split()[1:]:
                key, _, raw = token.partition("=")
                out[key] = None if raw == "-" else float(raw)
            return out
    raise ValueError("no summary line in metric table")
