"""Shared fixtures: small oracle worlds and recording backend stubs."""

from __future__ import annotations

import pytest

from worldloom.agents import AgentSettings
from worldloom.errors import TransportError
from worldloom.geometry import CameraPose, rot_y
from worldloom.oracle import OracleConfig, build_scene, oracle_backends, render
from worldloom.protocol import BackendSet
from worldloom.world import Budgets, Frame, new_world

SMALL_WORKING = 224
SMALL_RECON = 196


def small_settings() -> AgentSettings:
    return AgentSettings(working_resolution=SMALL_WORKING, recon_resolution=SMALL_RECON)


def small_oracle_config() -> OracleConfig:
    return OracleConfig(working_resolution=SMALL_WORKING, recon_resolution=SMALL_RECON)


def build_oracle_world(scene_seed=0, n_frames=3, budgets=None, **backend_kwargs):
    """A world of ground-truth renders along the rightward yaw chain."""
    config = small_oracle_config()
    backends = oracle_backends(scene_seed, config, **backend_kwargs)
    scene = build_scene(scene_seed)
    world = new_world(
        "a cluttered test chamber",
        budgets or Budgets(),
        seed=scene_seed,
        working_resolution=SMALL_WORKING,
    )
    for i in range(n_frames):
        pose = CameraPose(rot_y(-20.0 * i))
        img, _ = render(scene, pose, SMALL_WORKING, config.fov_degrees)
        world.frames.append(
            Frame(image=img, pose=pose, prompt=f"view {i + 1}", index=i + 1, try_number=i + 1)
        )
    world.budgets.tries_used = n_frames
    return world, backends


@pytest.fixture()
def oracle_world():
    return build_oracle_world()


class RecordingReconstructor:
    """Wraps a reconstructor, counting calls; optionally fails."""

    def __init__(self, inner=None, fail=False):
        self.inner = inner
        self.fail = fail
        self.calls = 0

    def reconstruct_render(self, frames, queries):
        self.calls += 1
        if self.fail or self.inner is None:
            raise TransportError("reconstructor down")
        return self.inner.reconstruct_render(frames, queries)


class RecordingGenerator:
    def __init__(self, inner):
        self.inner = inner
        self.txt2img_calls = 0
        self.inpaint_calls = 0

    def txt2img(self, prompt):
        self.txt2img_calls += 1
        return self.inner.txt2img(prompt)

    def inpaint(self, image, mask, prompt):
        self.inpaint_calls += 1
        return self.inner.inpaint(image, mask, prompt)


class SequenceVlm:
    """Replies from per-session queues; falls back to a fixed default."""

    def __init__(self, script=None, default="DECISION: ACCEPT"):
        self.script = {k: list(v) for k, v in (script or {}).items()}
        self.default = default
        self.calls: list[tuple] = []

    def chat(self, session, system, turns):
        self.calls.append((session, turns))
        queue = self.script.get(session)
        if queue:
            return queue.pop(0)
        return self.default


def with_stubs(backends: BackendSet, vlm=None, reconstructor=None, generator=None) -> BackendSet:
    return BackendSet(
        generator=generator if generator is not None else backends.generator,
        vlm=vlm if vlm is not None else backends.vlm,
        reconstructor=reconstructor if reconstructor is not None else backends.reconstructor,
        lpips=backends.lpips,
    )
