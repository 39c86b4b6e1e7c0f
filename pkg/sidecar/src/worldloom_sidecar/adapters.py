"""Model adapters: echo-stub, file-fixture, and the external-command hook.

An adapter maps a decoded wire request to a wire response document. The
echo-stub and file-fixture adapters need no model weights; external-command
shells out once per request and is the integration point for real
diffusion/VLM/3DGS stacks.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from pathlib import Path

import numpy as np

from .config import SidecarConfig
from .payloads import PayloadError, encode_image


class AdapterError(PayloadError):
    pass


def fixture_key(doc) -> str:
    """Stable lookup key for a request body or a pose row."""
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def _stub_image(seed_text: str, size: int) -> np.ndarray:
    """Deterministic gradient fixture derived from the request text."""
    seed = int.from_bytes(hashlib.sha256(seed_text.encode()).digest()[:4], "big")
    rng = np.random.default_rng(seed)
    base = rng.uniform(40, 200, size=3)
    ramp = np.linspace(0.0, 55.0, size)
    img = base[None, None, :] + ramp[:, None, None] + ramp[None, :, None] * 0.5
    return np.clip(img, 0, 255).astype(np.uint8)


class EchoStubAdapter:
    """Fixed fixture images, pass-through inpaint, canned chat replies."""

    def __init__(self, config: SidecarConfig):
        self.config = config

    def handle(self, endpoint: str, request: dict) -> dict:
        if endpoint == "/v1/txt2img":
            img = _stub_image(request["prompt"], self.config.resolution)
            return {"image": encode_image(img)}
        if endpoint == "/v1/inpaint":
            return {"image": request["image"]}
        if endpoint == "/v1/chat":
            turns = request["turns"]
            return {
                "text": (
                    "DECISION: ACCEPT\n"
                    f"REASON: echo-stub session={request['session_id']} turns={len(turns)}"
                )
            }
        if endpoint == "/v1/reconstruct_render":
            # echo the first frame back for every query, fully valid
            first = request["frames"][0]["image"]
            h, w = int(first["height"]), int(first["width"])
            all_valid = encode_image(
                np.zeros((h, w, 3), dtype=np.uint8), np.ones((h, w), dtype=bool)
            )["validity_mask"]
            render = {
                "width": w,
                "height": h,
                "encoding": first["encoding"],
                "validity_mask": all_valid,
            }
            return {"renders": [dict(render) for _ in request["queries"]]}
        if endpoint == "/v1/lpips":
            return {"value": 0.0}
        raise AdapterError("NotFound", f"echo-stub does not serve {endpoint}")


class FileFixtureAdapter:
    """Responses from pre-baked files.

    Layout under fixture_dir: `<endpoint-name>/<request-key>.json` holding the
    full response document; reconstruct_render instead resolves each query as
    `renders/<pose-key>.json` (keyed by the pose row), so one set of
    pre-rendered views serves any frame combination.
    """

    def __init__(self, config: SidecarConfig):
        self.root = Path(config.fixture_dir)

    def _load(self, relative: str) -> dict:
        path = self.root / relative
        if not path.is_file():
            raise AdapterError("FixtureMissing", f"no fixture at {relative}")
        return json.loads(path.read_text(encoding="utf-8"))

    def handle(self, endpoint: str, request: dict) -> dict:
        if endpoint == "/v1/reconstruct_render":
            renders = [
                self._load(f"renders/{fixture_key(pose)}.json")
                for pose in request["queries"]
            ]
            return {"renders": renders}
        name = endpoint.rsplit("/", 1)[-1]
        return self._load(f"{name}/{fixture_key(request)}.json")


class ExternalCommandAdapter:
    """Shells out per request: JSON in on stdin, JSON response on stdout."""

    def __init__(self, config: SidecarConfig):
        self.config = config

    def handle(self, endpoint: str, request: dict) -> dict:
        payload = json.dumps(
            {
                "endpoint": endpoint,
                "body": request,
                "defaults": {
                    "guidance_scale": self.config.guidance_scale,
                    "num_inference_steps": self.config.num_inference_steps,
                },
            }
        )
        try:
            proc = subprocess.run(
                self.config.command,
                input=payload.encode(),
                capture_output=True,
                timeout=600,
                check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise AdapterError("CommandFailed", str(exc)) from exc
        if proc.returncode != 0:
            raise AdapterError(
                "CommandFailed",
                f"exit {proc.returncode}: {proc.stderr.decode(errors='replace')[:200]}",
            )
        try:
            return json.loads(proc.stdout)
        except ValueError as exc:
            raise AdapterError("CommandFailed", f"non-JSON output: {exc}") from exc


def build_adapter(config: SidecarConfig):
    if config.adapter == "echo-stub":
        return EchoStubAdapter(config)
    if config.adapter == "file-fixture":
        return FileFixtureAdapter(config)
    return ExternalCommandAdapter(config)
