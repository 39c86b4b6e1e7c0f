"""JSON Schemas for every wire endpoint.

These are the conformance contract for sidecar services: each response a
service returns must validate against the response schema of its endpoint.
"""

from __future__ import annotations

_BASE64 = {"type": "string", "pattern": "^[A-Za-z0-9+/]*={0,2}$"}

IMAGE_PAYLOAD_SCHEMA = {
    "type": "object",
    "required": ["width", "height", "encoding"],
    "properties": {
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "encoding": _BASE64,
        "validity_mask": _BASE64,
    },
    "additionalProperties": False,
}

POSE_SCHEMA = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 16,
    "maxItems": 16,
}

TURN_SCHEMA = {
    "type": "object",
    "required": ["role", "type"],
    "properties": {
        "role": {"enum": ["user", "assistant"]},
        "type": {"enum": ["text", "image"]},
        "text": {"type": "string"},
        "image": IMAGE_PAYLOAD_SCHEMA,
    },
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["error"],
    "properties": {
        "error": {
            "type": "object",
            "required": ["code", "message"],
            "properties": {
                "code": {"type": "string"},
                "message": {"type": "string"},
            },
        }
    },
}

ENDPOINT_SCHEMAS: dict[str, dict[str, dict]] = {
    "/v1/txt2img": {
        "request": {
            "type": "object",
            "required": ["prompt"],
            "properties": {"prompt": {"type": "string", "minLength": 1}},
            "additionalProperties": False,
        },
        "response": {
            "type": "object",
            "required": ["image"],
            "properties": {"image": IMAGE_PAYLOAD_SCHEMA},
            "additionalProperties": False,
        },
    },
    "/v1/inpaint": {
        "request": {
            "type": "object",
            "required": ["image", "prompt"],
            "properties": {
                "image": IMAGE_PAYLOAD_SCHEMA,
                "mask": _BASE64,
                "prompt": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "response": {
            "type": "object",
            "required": ["image"],
            "properties": {"image": IMAGE_PAYLOAD_SCHEMA},
            "additionalProperties": False,
        },
    },
    "/v1/chat": {
        "request": {
            "type": "object",
            "required": ["session_id", "system", "turns"],
            "properties": {
                "session_id": {"type": "string"},
                "system": {"type": "string"},
                "turns": {"type": "array", "items": TURN_SCHEMA},
            },
            "additionalProperties": False,
        },
        "response": {
            "type": "object",
            "required": ["text"],
            "properties": {"text": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "/v1/reconstruct_render": {
        "request": {
            "type": "object",
            "required": ["frames", "queries"],
            "properties": {
                "frames": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["image", "pose"],
                        "properties": {
                            "image": IMAGE_PAYLOAD_SCHEMA,
                            "pose": POSE_SCHEMA,
                        },
                        "additionalProperties": False,
                    },
                },
                "queries": {"type": "array", "items": POSE_SCHEMA},
            },
            "additionalProperties": False,
        },
        "response": {
            "type": "object",
            "required": ["renders"],
            "properties": {
                "renders": {
                    "type": "array",
                    "items": {
                        "allOf": [IMAGE_PAYLOAD_SCHEMA],
                        "required": ["validity_mask"],
                    },
                },
            },
            "additionalProperties": False,
        },
    },
    "/v1/lpips": {
        "request": {
            "type": "object",
            "required": ["a", "b"],
            "properties": {
                "a": IMAGE_PAYLOAD_SCHEMA,
                "b": IMAGE_PAYLOAD_SCHEMA,
            },
            "additionalProperties": False,
        },
        "response": {
            "type": "object",
            "required": ["value"],
            "properties": {"value": {"type": "number"}},
            "additionalProperties": False,
        },
    },
}

ROLE_ENDPOINTS = {
    "generator": ["/v1/txt2img", "/v1/inpaint"],
    "vlm": ["/v1/chat"],
    "reconstructor": ["/v1/reconstruct_render"],
    "lpips": ["/v1/lpips"],
}
