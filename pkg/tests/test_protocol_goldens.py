"""Generates the golden protocol fixtures consumed by sidecar conformance.

Each fixture pair is `golden/NNN_request.json` (endpoint + body) and
`golden/NNN_response_schema.json` (JSON Schema the response must satisfy).
The fixtures are deterministic; this module regenerates them on every run and
verifies the built-in oracle server itself conforms to the schemas it ships.
"""

import json
from pathlib import Path

import jsonschema
import numpy as np
import requests

from worldloom.geometry import CameraPose, rot_y
from worldloom.oracle import OracleConfig, oracle_backends
from worldloom.protocol import ImagePayload
from worldloom.schemas import ENDPOINT_SCHEMAS
from worldloom.server import WireServer

GOLDEN_DIR = Path(__file__).resolve().parents[1] / "golden"


def tiny_image(seed, size=16):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


def tiny_mask(seed, size=16):
    return np.random.default_rng(seed).random((size, size)) > 0.5


def build_fixtures() -> list[tuple[str, dict]]:
    img = ImagePayload.from_image(tiny_image(1)).to_json()
    masked = ImagePayload.from_image(tiny_image(2), tiny_mask(3)).to_json()
    pose_a = CameraPose.identity().flat()
    pose_b = CameraPose(rot_y(-20.0)).flat()
    return [
        ("/v1/txt2img", {"prompt": "a tiled utility corridor"}),
        ("/v1/inpaint", {"image": img, "mask": masked["validity_mask"], "prompt": "fill the gap"}),
        ("/v1/inpaint", {"image": img, "prompt": "maskless fill"}),
        ("/v1/chat", {
            "session_id": "director",
            "system": "You plan the sweep.",
            "turns": [{"role": "user", "type": "text", "text": "Propose the next view."}],
        }),
        ("/v1/chat", {
            "session_id": "verify_2d",
            "system": "You screen candidates.",
            "turns": [
                {"role": "user", "type": "text", "text": "Candidate follows."},
                {"role": "user", "type": "image", "image": img},
                {"role": "assistant", "type": "text", "text": "DECISION: ACCEPT"},
                {"role": "user", "type": "text", "text": "And one more."},
                {"role": "user", "type": "image", "image": masked},
            ],
        }),
        ("/v1/reconstruct_render", {
            "frames": [{"image": img, "pose": pose_a}],
            "queries": [pose_a, pose_b],
        }),
        ("/v1/lpips", {"a": img, "b": masked}),
    ]


def test_goldens_regenerate_and_validate():
    GOLDEN_DIR.mkdir(exist_ok=True)
    for stale in GOLDEN_DIR.glob("*.json"):
        stale.unlink()
    fixtures = build_fixtures()
    for i, (endpoint, body) in enumerate(fixtures):
        jsonschema.validate(body, ENDPOINT_SCHEMAS[endpoint]["request"])
        request_doc = {"endpoint": endpoint, "body": body}
        (GOLDEN_DIR / f"{i:03d}_request.json").write_text(
            json.dumps(request_doc, indent=1, sort_keys=True), encoding="utf-8"
        )
        (GOLDEN_DIR / f"{i:03d}_response_schema.json").write_text(
            json.dumps(ENDPOINT_SCHEMAS[endpoint]["response"], indent=1, sort_keys=True),
            encoding="utf-8",
        )
    assert len(list(GOLDEN_DIR.glob("*_request.json"))) == len(fixtures)


def test_shipped_schemas_are_valid_json_schema():
    for endpoint, pair in ENDPOINT_SCHEMAS.items():
        for kind in ("request", "response"):
            jsonschema.Draft7Validator.check_schema(pair[kind])


def test_oracle_server_conforms_to_shipped_schemas():
    config = OracleConfig(working_resolution=64, recon_resolution=16)
    server = WireServer(oracle_backends(0, config)).start()
    try:
        for endpoint, body in build_fixtures():
            resp = requests.post(f"{server.url}{endpoint}", json=body, timeout=10)
            if endpoint == "/v1/lpips":
                # the oracle ships no lpips backend; the endpoint stays unmounted
                assert resp.status_code == 404
                continue
            assert resp.status_code == 200, (endpoint, resp.text)
            jsonschema.validate(resp.json(), ENDPOINT_SCHEMAS[endpoint]["response"])
    finally:
        server.stop()
