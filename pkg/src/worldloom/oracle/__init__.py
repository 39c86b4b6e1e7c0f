"""Procedural ground-truth environment impersonating all model backends."""

from .backends import (
    OracleConfig,
    OracleGenerator,
    OracleReconstructor,
    OracleRole,
    PoseHint,
    ScriptedVlm,
    VerifierThresholds,
    oracle_backends,
    serve_oracle,
)
from .corrupt import CorruptionKind, corrupt
from .render import DEFAULT_FOV_DEGREES, DepthImage, render
from .scene import Box, OracleScene, Plane, build_scene, texture_rgb
from .warp import warp_reconstruct

__all__ = [
    "Box",
    "CorruptionKind",
    "DEFAULT_FOV_DEGREES",
    "DepthImage",
    "OracleConfig",
    "OracleGenerator",
    "OracleReconstructor",
    "OracleRole",
    "OracleScene",
    "Plane",
    "PoseHint",
    "ScriptedVlm",
    "VerifierThresholds",
    "build_scene",
    "corrupt",
    "oracle_backends",
    "render",
    "serve_oracle",
    "texture_rgb",
    "warp_reconstruct",
]
