"""FastAPI service mounting the wire endpoints for one backend role."""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .adapters import build_adapter
from .config import SidecarConfig
from .payloads import PayloadError, check_pose, decode_image, decode_mask

logger = logging.getLogger(__name__)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def _require(body: dict, *fields: str) -> None:
    for field in fields:
        if field not in body:
            raise PayloadError("MissingField", f"request lacks {field!r}")


def validate_request(endpoint: str, body: dict) -> None:
    """Schema checks for incoming requests; raises PayloadError on violation."""
    if not isinstance(body, dict):
        raise PayloadError("MalformedRequest", "body must be a JSON object")
    if endpoint == "/v1/txt2img":
        _require(body, "prompt")
        if not isinstance(body["prompt"], str) or not body["prompt"]:
            raise PayloadError("MalformedRequest", "prompt must be a non-empty string")
    elif endpoint == "/v1/inpaint":
        _require(body, "image", "prompt")
        img = decode_image(body["image"])
        if body.get("mask") is not None:
            decode_mask(body["mask"], img.shape[0], img.shape[1])
    elif endpoint == "/v1/chat":
        _require(body, "session_id", "system", "turns")
        if not isinstance(body["turns"], list):
            raise PayloadError("MalformedRequest", "turns must be a list")
        for turn in body["turns"]:
            if turn.get("type") == "image":
                decode_image(turn.get("image", {}))
    elif endpoint == "/v1/reconstruct_render":
        _require(body, "frames", "queries")
        if not body["frames"]:
            raise PayloadError("MalformedRequest", "frames must be non-empty")
        for frame in body["frames"]:
            decode_image(frame.get("image", {}))
            check_pose(frame.get("pose"))
        for pose in body["queries"]:
            check_pose(pose)
    elif endpoint == "/v1/lpips":
        _require(body, "a", "b")
        decode_image(body["a"])
        decode_image(body["b"])


def create_app(config: SidecarConfig) -> FastAPI:
    app = FastAPI(title=f"worldloom-sidecar [{config.role}/{config.adapter}]")
    adapter = build_adapter(config)

    def make_handler(endpoint: str):
        async def handler(request: Request):
            try:
                body = await request.json()
            except ValueError:
                return _error(400, "MalformedRequest", "body is not valid JSON")
            try:
                validate_request(endpoint, body)
                return JSONResponse(adapter.handle(endpoint, body))
            except PayloadError as exc:
                return _error(400, exc.code, exc.message)
            except Exception as exc:  # pragma: no cover - defensive
                logger.exception("adapter failure on %s", endpoint)
                return _error(500, "Internal", str(exc))

        return handler

    for endpoint in config.endpoints:
        app.post(endpoint)(make_handler(endpoint))

    @app.get("/healthz")
    async def healthz():
        return {
            "role": config.role,
            "adapter": config.adapter,
            "guidance_scale": config.guidance_scale,
            "num_inference_steps": config.num_inference_steps,
        }

    return app


def serve(config: SidecarConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host="127.0.0.1", port=config.port, log_level="warning")
