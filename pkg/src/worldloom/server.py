"""Loopback HTTP server exposing a backend set over the wire protocol.

Serves the synthetic oracle (or any duck-typed backend quartet) so the real
HTTP clients can be exercised end to end without model services.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .errors import WorldLoomError
from .imaging import unpack_mask
from .protocol import ImagePayload, pose_from_wire
from .schemas import ROLE_ENDPOINTS

ALL_ROLES = ("generator", "vlm", "reconstructor", "lpips")


def _decode_turns(wire_turns) -> list[tuple]:
    turns = []
    for t in wire_turns:
        role = t.get("role", "user")
        if t.get("type") == "image":
            turns.append(("image", ImagePayload.from_json(t["image"]).image()))
        elif role == "assistant":
            turns.append(("assistant", t.get("text", "")))
        else:
            turns.append(("text", t.get("text", "")))
    return turns


class WireServer:
    """Threaded JSON-over-HTTP server for one or more backend roles."""

    def __init__(self, backends, host: str = "127.0.0.1", port: int = 0,
                 token: str | None = None, roles=None):
        self.backends = backends
        self.token = token
        self.roles = tuple(roles) if roles else ALL_ROLES
        self._endpoints = {
            path for role in self.roles for path in ROLE_ENDPOINTS.get(role, [])
        }
        if getattr(backends, "lpips", None) is None:
            self._endpoints.discard("/v1/lpips")
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # keep test output quiet
                pass

            def do_POST(self):
                outer._handle(self)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "WireServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    # --- request handling ---------------------------------------------------

    def _handle(self, request: BaseHTTPRequestHandler) -> None:
        try:
            if self.token is not None:
                supplied = request.headers.get("Authorization", "")
                if supplied != f"Bearer {self.token}":
                    self._reply(request, 401, {"error": {"code": "Unauthorized", "message": "bad token"}})
                    return
            if request.path not in self._endpoints:
                self._reply(request, 404, {"error": {"code": "NotFound", "message": request.path}})
                return
            length = int(request.headers.get("Content-Length", 0))
            try:
                body = json.loads(request.rfile.read(length))
            except ValueError:
                self._reply(request, 400, {"error": {"code": "MalformedRequest", "message": "bad JSON"}})
                return
            try:
                doc = self._dispatch(request.path, body)
            except WorldLoomError as exc:
                self._reply(
                    request, 400,
                    {"error": {"code": type(exc).__name__, "message": str(exc)}},
                )
                return
            except (KeyError, TypeError, ValueError) as exc:
                self._reply(
                    request, 400,
                    {"error": {"code": "MalformedRequest", "message": str(exc)}},
                )
                return
            self._reply(request, 200, doc)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception as exc:  # pragma: no cover - defensive
            try:
                self._reply(request, 500, {"error": {"code": "Internal", "message": str(exc)}})
            except Exception:
                pass

    @staticmethod
    def _reply(request: BaseHTTPRequestHandler, status: int, doc: dict) -> None:
        data = json.dumps(doc).encode("utf-8")
        request.send_response(status)
        request.send_header("Content-Type", "application/json")
        request.send_header("Content-Length", str(len(data)))
        request.end_headers()
        request.wfile.write(data)

    def _dispatch(self, path: str, body: dict) -> dict:
        if path == "/v1/txt2img":
            img = self.backends.generator.txt2img(body["prompt"])
            return {"image": ImagePayload.from_image(img).to_json()}

        if path == "/v1/inpaint":
            payload = ImagePayload.from_json(body["image"])
            img = payload.image()
            raw_mask = body.get("mask")
            if raw_mask is not None:
                mask = unpack_mask(
                    base64.b64decode(raw_mask), payload.height, payload.width
                )
            else:
                # maskless request: the black fill is the mask
                mask = np.any(img >= 2, axis=-1)
            out = self.backends.generator.inpaint(img, mask, body.get("prompt", ""))
            return {"image": ImagePayload.from_image(out).to_json()}

        if path == "/v1/chat":
            turns = _decode_turns(body["turns"])
            vlm = self.backends.vlm
            if hasattr(vlm, "reply_for"):
                text = vlm.reply_for(body["session_id"], body.get("system", ""), turns)
            else:
                text = vlm.chat(body["session_id"], body.get("system", ""), turns)
            return {"text": text}

        if path == "/v1/reconstruct_render":
            frames = [
                (
                    ImagePayload.from_json(f["image"]).image(),
                    pose_from_wire(f["pose"]),
                )
                for f in body["frames"]
            ]
            queries = [pose_from_wire(q) for q in body["queries"]]
            renders = self.backends.reconstructor.reconstruct_render(frames, queries)
            return {
                "renders": [
                    ImagePayload.from_image(img, mask).to_json() for img, mask in renders
                ]
            }

        if path == "/v1/lpips":
            a = ImagePayload.from_json(body["a"]).image()
            b = ImagePayload.from_json(body["b"]).image()
            return {"value": float(self.backends.lpips.lpips(a, b))}

        raise KeyError(path)
