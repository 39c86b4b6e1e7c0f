"""Small image utilities: dtype conversion, resampling, PNG and mask codecs."""

from __future__ import annotations

import hashlib
import io

import numpy as np
from PIL import Image

from .errors import DimensionMismatch


def as_float01(img: np.ndarray) -> np.ndarray:
    """uint8 images become float64 in [0,1]; float images pass through."""
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64, copy=False)


def as_uint8(img: np.ndarray) -> np.ndarray:
    if img.dtype == np.uint8:
        return img
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) matrix of pixel-overlap weights for area resampling."""
    w = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for o in range(n_out):
        lo = o * scale
        hi = (o + 1) * scale
        i0 = int(np.floor(lo))
        i1 = int(np.ceil(hi))
        for i in range(i0, min(i1, n_in)):
            w[o, i] = min(hi, i + 1) - max(lo, i)
    w /= w.sum(axis=1, keepdims=True)
    return w


def area_resize(img: np.ndarray, size: int) -> np.ndarray:
    """Box/area resample a square image to size x size. Returns uint8 for uint8 input."""
    h, wd = img.shape[:2]
    if h == size and wd == size:
        return img.copy()
    was_uint8 = img.dtype == np.uint8
    data = as_float01(img)
    wy = _area_weights(h, size)
    wx = _area_weights(wd, size)
    if data.ndim == 2:
        out = wy @ data @ wx.T
    else:
        out = np.einsum("oi,ijc,pj->opc", wy, data, wx, optimize=True)
    return as_uint8(out) if was_uint8 else out


def nearest_resize(img: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbour resample; keeps hole boundaries crisp for masks."""
    h, w = img.shape[:2]
    yi = np.minimum((np.arange(size) + 0.5) * h / size, h - 1).astype(np.intp)
    xi = np.minimum((np.arange(size) + 0.5) * w / size, w - 1).astype(np.intp)
    return img[np.ix_(yi, xi)].copy()


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(as_uint8(img)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def pack_mask(mask: np.ndarray) -> bytes:
    """1-bit-per-pixel row-major packing of a boolean mask."""
    return np.packbits(mask.astype(bool).ravel()).tobytes()


def unpack_mask(data: bytes, height: int, width: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=height * width)
    return bits.reshape(height, width).astype(bool)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def image_hash(img: np.ndarray) -> str:
    """Content hash of the raw pixel buffer (shape-tagged)."""
    arr = np.ascontiguousarray(as_uint8(img))
    tag = f"{arr.shape[0]}x{arr.shape[1]}x{arr.shape[2] if arr.ndim == 3 else 1}:".encode()
    return sha256_hex(tag + arr.tobytes())
