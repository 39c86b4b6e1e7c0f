"""Wire payload helpers: base64 PNG images and packed validity masks."""

from __future__ import annotations

import base64
import io
import math

import numpy as np
from PIL import Image


class PayloadError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def decode_image(doc) -> np.ndarray:
    try:
        width = int(doc["width"])
        height = int(doc["height"])
        raw = base64.b64decode(doc["encoding"], validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            img = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise PayloadError("MalformedImage", f"cannot decode image payload: {exc}") from exc
    if img.shape[0] != height or img.shape[1] != width:
        raise PayloadError(
            "MalformedImage",
            f"payload declares {width}x{height} but decodes to {img.shape[1]}x{img.shape[0]}",
        )
    return img


def encode_image(img: np.ndarray, mask: np.ndarray | None = None) -> dict:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    doc = {
        "width": int(img.shape[1]),
        "height": int(img.shape[0]),
        "encoding": base64.b64encode(buf.getvalue()).decode("ascii"),
    }
    if mask is not None:
        doc["validity_mask"] = base64.b64encode(
            np.packbits(mask.astype(bool).ravel()).tobytes()
        ).decode("ascii")
    return doc


def decode_mask(b64: str, height: int, width: int) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
    except (TypeError, ValueError) as exc:
        raise PayloadError("MalformedMask", f"cannot decode mask: {exc}") from exc
    expected = math.ceil(height * width / 8)
    if len(raw) != expected:
        raise PayloadError(
            "MalformedMask", f"mask holds {len(raw)} bytes, expected {expected}"
        )
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=height * width)
    return bits.reshape(height, width).astype(bool)


def check_pose(values) -> list[float]:
    if not isinstance(values, list) or len(values) != 16:
        raise PayloadError("MalformedPose", "pose must be 16 numbers, row-major")
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError) as exc:
        raise PayloadError("MalformedPose", f"pose holds non-numbers: {exc}") from exc
