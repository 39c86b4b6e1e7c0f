"""Wire protocol to the generator / VLM / reconstructor / LPIPS services.

JSON over HTTP with base64 PNG payloads. Transport-class failures are retried
with exponential backoff; remote application errors are surfaced untouched
(semantic retries belong to the orchestrator).
"""

from __future__ import annotations

import base64
import json
import math
import os
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import (
    BackendTimeout,
    EmptyInput,
    MalformedResponse,
    MaskRequired,
    PayloadTooLarge,
    RemoteError,
    TransportError,
)
from .geometry import CameraPose
from .imaging import area_resize, decode_png, encode_png, pack_mask, unpack_mask

DEFAULT_TIMEOUT_SECS = 60.0
DEFAULT_MAX_PAYLOAD_BYTES = 64 * 1024 * 1024

TOKEN_ENV = "WORLDLOOM_TOKEN"
TIMEOUT_ENV = "WORLDLOOM_TIMEOUT_SECS"


@dataclass
class BackendEndpoints:
    generator_url: str = ""
    vlm_url: str = ""
    reconstructor_url: str = ""
    lpips_url: str | None = None
    timeout: float = DEFAULT_TIMEOUT_SECS
    max_transport_retries: int = 2
    backoff_base_secs: float = 0.25
    auth_token: str | None = None
    generator_accepts_mask: bool = True
    max_payload_bytes: int = DEFAULT_MAX_PAYLOAD_BYTES

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_transport_retries < 0:
            raise ValueError("max_transport_retries must be >= 0")

    @classmethod
    def from_env(cls, **kwargs) -> "BackendEndpoints":
        token = os.environ.get(TOKEN_ENV)
        timeout = float(os.environ.get(TIMEOUT_ENV, DEFAULT_TIMEOUT_SECS))
        kwargs.setdefault("auth_token", token)
        kwargs.setdefault("timeout", timeout)
        return cls(**kwargs)


@dataclass
class ImagePayload:
    """Lossless raster image plus optional 1-bit validity mask."""

    width: int
    height: int
    encoding: bytes  # PNG bytes
    validity_mask: bytes | None = None  # packed row-major bits

    @classmethod
    def from_image(cls, img: np.ndarray, mask: np.ndarray | None = None) -> "ImagePayload":
        h, w = img.shape[:2]
        if mask is not None and mask.shape != (h, w):
            raise ValueError(f"mask shape {mask.shape} does not match image {h}x{w}")
        return cls(
            width=w,
            height=h,
            encoding=encode_png(img),
            validity_mask=pack_mask(mask) if mask is not None else None,
        )

    def image(self) -> np.ndarray:
        img = decode_png(self.encoding)
        if img.shape[0] != self.height or img.shape[1] != self.width:
            raise MalformedResponse(
                f"payload declares {self.width}x{self.height} but decodes to "
                f"{img.shape[1]}x{img.shape[0]}"
            )
        return img

    def mask(self) -> np.ndarray | None:
        if self.validity_mask is None:
            return None
        expected = math.ceil(self.width * self.height / 8)
        if len(self.validity_mask) != expected:
            raise MalformedResponse(
                f"mask holds {len(self.validity_mask)} bytes, expected {expected}"
            )
        return unpack_mask(self.validity_mask, self.height, self.width)

    def to_json(self) -> dict:
        doc = {
            "width": self.width,
            "height": self.height,
            "encoding": base64.b64encode(self.encoding).decode("ascii"),
        }
        if self.validity_mask is not None:
            doc["validity_mask"] = base64.b64encode(self.validity_mask).decode("ascii")
        return doc

    @classmethod
    def from_json(cls, doc) -> "ImagePayload":
        try:
            width = int(doc["width"])
            height = int(doc["height"])
            encoding = base64.b64decode(doc["encoding"])
            raw_mask = doc.get("validity_mask")
            mask = base64.b64decode(raw_mask) if raw_mask is not None else None
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad image payload: {exc}") from exc
        return cls(width=width, height=height, encoding=encoding, validity_mask=mask)


def pose_to_wire(pose: CameraPose) -> list[float]:
    return pose.flat()


def pose_from_wire(values) -> CameraPose:
    return CameraPose.from_flat(values)


# --- low-level caller -------------------------------------------------------

class HttpCaller:
    """POST JSON with per-call timeout, bearer auth and transport retries."""

    def __init__(self, endpoints: BackendEndpoints):
        self.endpoints = endpoints
        self._session = requests.Session()

    def post(self, url: str, body: dict) -> dict:
        data = json.dumps(body).encode("utf-8")
        if len(data) > self.endpoints.max_payload_bytes:
            raise PayloadTooLarge(
                f"request body {len(data)} bytes exceeds "
                f"{self.endpoints.max_payload_bytes}"
            )
        headers = {"Content-Type": "application/json"}
        if self.endpoints.auth_token:
            headers["Authorization"] = f"Bearer {self.endpoints.auth_token}"

        attempts = 1 + self.endpoints.max_transport_retries
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.endpoints.backoff_base_secs * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    url, data=data, headers=headers, timeout=self.endpoints.timeout
                )
            except requests.Timeout as exc:
                last_error = BackendTimeout(f"{url}: {exc}")
                continue
            except requests.RequestException as exc:
                last_error = TransportError(f"{url}: {exc}")
                continue
            return self._interpret(url, resp)
        assert last_error is not None
        raise last_error

    @staticmethod
    def _interpret(url: str, resp: requests.Response) -> dict:
        if resp.status_code < 200 or resp.status_code >= 300:
            try:
                err = resp.json()["error"]
                code, message = str(err.get("code", resp.status_code)), str(err.get("message", ""))
            except (ValueError, KeyError, TypeError, AttributeError):
                code, message = str(resp.status_code), resp.text[:200]
            raise RemoteError(code, message)
        try:
            doc = resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"{url}: non-JSON 2xx body") from exc
        if not isinstance(doc, dict):
            raise MalformedResponse(f"{url}: JSON body is not an object")
        return doc


# --- service clients --------------------------------------------------------

class GeneratorClient:
    """txt2img and inpaint against {generator}/v1/*."""

    def __init__(self, endpoints: BackendEndpoints, working_resolution: int = 512):
        self.endpoints = endpoints
        self.working_resolution = working_resolution
        self._caller = HttpCaller(endpoints)

    def _check_square(self, img: np.ndarray) -> np.ndarray:
        if img.shape[0] != img.shape[1] or img.shape[0] != self.working_resolution:
            raise MalformedResponse(
                f"generator returned {img.shape[1]}x{img.shape[0]}, expected "
                f"{self.working_resolution} square"
            )
        return img

    def txt2img(self, prompt: str) -> np.ndarray:
        if not prompt:
            raise EmptyInput("txt2img needs a non-empty prompt")
        doc = self._caller.post(
            f"{self.endpoints.generator_url}/v1/txt2img", {"prompt": prompt}
        )
        try:
            payload = ImagePayload.from_json(doc["image"])
        except KeyError as exc:
            raise MalformedResponse("txt2img response lacks 'image'") from exc
        return self._check_square(payload.image())

    def inpaint(self, image: np.ndarray, mask: np.ndarray, prompt: str) -> np.ndarray:
        if mask is None:
            raise MaskRequired("inpaint input must carry a validity mask")
        filled = image.copy()
        filled[~mask] = 0  # black-fill holes at the protocol boundary
        body = {
            "image": ImagePayload.from_image(filled).to_json(),
            "prompt": prompt,
        }
        if self.endpoints.generator_accepts_mask:
            body["mask"] = base64.b64encode(pack_mask(mask)).decode("ascii")
        doc = self._caller.post(f"{self.endpoints.generator_url}/v1/inpaint", body)
        try:
            payload = ImagePayload.from_json(doc["image"])
        except KeyError as exc:
            raise MalformedResponse("inpaint response lacks 'image'") from exc
        return self._check_square(payload.image())


def _turn_to_wire(role: str, turn) -> dict:
    kind, value = turn
    if kind == "text":
        return {"role": role, "type": "text", "text": str(value)}
    if kind == "image":
        return {"role": role, "type": "image", "image": ImagePayload.from_image(value).to_json()}
    raise ValueError(f"unknown turn kind {kind!r}")


class VlmClient:
    """Chat against {vlm}/v1/chat, keeping an independent history per session."""

    def __init__(self, endpoints: BackendEndpoints):
        self.endpoints = endpoints
        self._caller = HttpCaller(endpoints)
        self._history: dict[str, list[dict]] = {}
        self._lock = threading.Lock()

    def history_length(self, session: str) -> int:
        with self._lock:
            return len(self._history.get(session, []))

    def chat(self, session: str, system: str, turns) -> str:
        wire_turns = [_turn_to_wire("user", t) for t in turns]
        with self._lock:
            transcript = list(self._history.get(session, []))
        body = {
            "session_id": session,
            "system": system,
            "turns": transcript + wire_turns,
        }
        doc = self._caller.post(f"{self.endpoints.vlm_url}/v1/chat", body)
        text = doc.get("text")
        if not isinstance(text, str):
            raise MalformedResponse("chat response lacks 'text'")
        # commit history only after a successful exchange
        with self._lock:
            stored = self._history.setdefault(session, [])
            stored.extend(wire_turns)
            stored.append({"role": "assistant", "type": "text", "text": text})
        return text


class ReconstructorClient:
    """reconstruct_render against {reconstructor}/v1/reconstruct_render."""

    def __init__(self, endpoints: BackendEndpoints, recon_resolution: int = 448):
        self.endpoints = endpoints
        self.recon_resolution = recon_resolution
        self._caller = HttpCaller(endpoints)

    def reconstruct_render(self, frames, queries) -> list[tuple[np.ndarray, np.ndarray]]:
        frames = list(frames)
        queries = list(queries)
        if not frames:
            raise EmptyInput("reconstruct_render needs at least one frame")
        body = {
            "frames": [
                {
                    "image": ImagePayload.from_image(
                        area_resize(img, self.recon_resolution)
                    ).to_json(),
                    "pose": pose_to_wire(pose),
                }
                for img, pose in frames
            ],
            "queries": [pose_to_wire(p) for p in queries],
        }
        doc = self._caller.post(
            f"{self.endpoints.reconstructor_url}/v1/reconstruct_render", body
        )
        renders = doc.get("renders")
        if not isinstance(renders, list) or len(renders) != len(queries):
            got = len(renders) if isinstance(renders, list) else "none"
            raise MalformedResponse(
                f"expected {len(queries)} renders, got {got}"
            )
        out = []
        for entry in renders:
            payload = ImagePayload.from_json(entry)
            mask = payload.mask()
            if mask is None:
                raise MalformedResponse("render lacks a validity mask")
            out.append((payload.image(), mask))
        return out


class LpipsClient:
    def __init__(self, endpoints: BackendEndpoints):
        self.endpoints = endpoints
        self._caller = HttpCaller(endpoints)

    def lpips(self, a: np.ndarray, b: np.ndarray) -> float:
        doc = self._caller.post(
            f"{self.endpoints.lpips_url}/v1/lpips",
            {
                "a": ImagePayload.from_image(a).to_json(),
                "b": ImagePayload.from_image(b).to_json(),
            },
        )
        value = doc.get("value")
        if not isinstance(value, (int, float)):
            raise MalformedResponse("lpips response lacks numeric 'value'")
        return float(value)


@dataclass
class BackendSet:
    """The duck-typed quartet the agents consume.

    HTTP clients and in-process oracle handles are interchangeable here.
    """

    generator: object
    vlm: object
    reconstructor: object
    lpips: object | None = None


def build_http_backends(
    endpoints: BackendEndpoints,
    working_resolution: int = 512,
    recon_resolution: int = 448,
) -> BackendSet:
    return BackendSet(
        generator=GeneratorClient(endpoints, working_resolution),
        vlm=VlmClient(endpoints),
        reconstructor=ReconstructorClient(endpoints, recon_resolution),
        lpips=LpipsClient(endpoints) if endpoints.lpips_url else None,
    )
