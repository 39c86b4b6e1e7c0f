"""Sidecar service configuration."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

ROLES = ("generator", "vlm", "reconstructor", "lpips")
ADAPTERS = ("echo-stub", "file-fixture", "external-command")

ROLE_ENDPOINTS = {
    "generator": ("/v1/txt2img", "/v1/inpaint"),
    "vlm": ("/v1/chat",),
    "reconstructor": ("/v1/reconstruct_render",),
    "lpips": ("/v1/lpips",),
}


@dataclass
class SidecarConfig:
    port: int = 8600
    role: str = "generator"
    adapter: str = "echo-stub"
    fixture_dir: Path | None = None  # file-fixture adapter root
    command: list[str] | None = None  # external-command argv
    resolution: int = 512
    # inference defaults handed through to real model integrations
    guidance_scale: float = 1.0
    num_inference_steps: int = 4

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.adapter not in ADAPTERS:
            raise ValueError(f"adapter must be one of {ADAPTERS}, got {self.adapter!r}")
        if self.adapter == "file-fixture" and self.fixture_dir is None:
            raise ValueError("file-fixture adapter needs fixture_dir")
        if self.adapter == "external-command" and not self.command:
            raise ValueError("external-command adapter needs a command")

    @property
    def endpoints(self) -> tuple[str, ...]:
        return ROLE_ENDPOINTS[self.role]
