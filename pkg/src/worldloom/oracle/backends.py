"""In-process backend handles backed by the procedural oracle scene.

These satisfy the same duck-typed interface as the HTTP clients, so the full
protocol can run with no model services at all.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyInput, MaskRequired
from ..geometry import CameraPose, rot_y
from ..metrics import parse_metric_summary
from ..protocol import BackendSet
from .render import DEFAULT_FOV_DEGREES, render
from .scene import OracleScene, build_scene
from .warp import splat, unproject


class OracleRole(enum.Enum):
    PERFECT_GENERATOR = "PerfectGenerator"
    LAZY_GENERATOR = "LazyGenerator"
    DRIFTING_GENERATOR = "DriftingGenerator"
    RECONSTRUCTOR = "Reconstructor"
    SCRIPTED_VLM = "ScriptedVLM"


@dataclass
class VerifierThresholds:
    # the psnr floor sits between the oracle's measured clean (>=33 dB) and
    # corrupted (<=21 dB) render-back regimes, with margin on both sides
    min_psnr_db: float = 26.0
    min_ssim: float = 0.55
    max_black_fraction: float = 0.10
    black_level: int = 2  # uint8 value below which a pixel counts as unfilled


@dataclass
class OracleConfig:
    working_resolution: int = 512
    recon_resolution: int = 448
    fov_degrees: float = DEFAULT_FOV_DEGREES
    drift_degrees_per_call: float = 5.0
    thresholds: VerifierThresholds = field(default_factory=VerifierThresholds)


class PoseHint:
    """Mutable cell carrying the most recent reconstruction query pose.

    The wire protocol deliberately keeps generators pose-blind (real diffusion
    backends infer layout from the partial image). The oracle generator is not
    a learned model, so inside one oracle process the reconstructor shares the
    last query pose with it; txt2img always uses the identity bootstrap pose.
    """

    def __init__(self):
        self.value = CameraPose.identity()


class OracleReconstructor:
    """Depth-warp reconstructor; ground-truth depths, caller-supplied colors."""

    def __init__(self, scene: OracleScene, config: OracleConfig, hint: PoseHint | None = None):
        self.scene = scene
        self.config = config
        self.hint = hint if hint is not None else PoseHint()
        # world points depend only on the pose (ground-truth depth), so they
        # are cached across calls; colors are re-gathered from each request
        self._points_cache: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}
        self.calls = 0

    def _points_at(self, pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
        key = pose.matrix.tobytes()
        if key not in self._points_cache:
            _, depth = render(
                self.scene, pose, self.config.recon_resolution, self.config.fov_degrees
            )
            self._points_cache[key] = unproject(depth, pose, self.config.fov_degrees)
        return self._points_cache[key]

    def reconstruct_render(self, frames, queries) -> list[tuple[np.ndarray, np.ndarray]]:
        frames = list(frames)
        queries = list(queries)
        if not frames:
            raise EmptyInput("reconstruct_render needs at least one frame")
        self.calls += 1
        sources = []
        for img, pose in frames:
            if img.shape[0] != self.config.recon_resolution:
                raise ValueError(
                    f"reconstructor expects {self.config.recon_resolution}px frames, "
                    f"got {img.shape[0]}"
                )
            pts_world, valid = self._points_at(pose)
            sources.append((pts_world, img.reshape(-1, 3)[valid]))
        out = [
            splat(sources, q, self.config.recon_resolution, self.config.fov_degrees)
            for q in queries
        ]
        if queries:
            self.hint.value = queries[-1]
        return out


class OracleGenerator:
    """txt2img / inpaint from ground-truth renders, with selectable failure modes."""

    def __init__(
        self,
        scene: OracleScene,
        config: OracleConfig,
        role: OracleRole = OracleRole.PERFECT_GENERATOR,
        hint: PoseHint | None = None,
    ):
        self.scene = scene
        self.config = config
        self.role = role
        self.hint = hint if hint is not None else PoseHint()
        self.inpaint_calls = 0

    def _render_at(self, pose: CameraPose, resolution: int | None = None) -> np.ndarray:
        img, _ = render(
            self.scene,
            pose,
            resolution if resolution is not None else self.config.working_resolution,
            self.config.fov_degrees,
        )
        return img

    def txt2img(self, prompt: str) -> np.ndarray:
        if not prompt:
            raise EmptyInput("txt2img needs a non-empty prompt")
        return self._render_at(CameraPose.identity())

    def inpaint(self, image: np.ndarray, mask: np.ndarray, prompt: str) -> np.ndarray:
        if mask is None:
            raise MaskRequired("inpaint input must carry a validity mask")
        self.inpaint_calls += 1

        if self.role is OracleRole.LAZY_GENERATOR:
            return image.copy()

        if self.role is OracleRole.DRIFTING_GENERATOR:
            offset = self.config.drift_degrees_per_call * self.inpaint_calls
            drifted = CameraPose(rot_y(offset) @ self.hint.value.matrix)
            return self._render_at(drifted, image.shape[0])

        # perfect: fill only the invalid pixels, valid ones stay byte-identical
        fill = self._render_at(self.hint.value, image.shape[0])
        out = image.copy()
        out[~mask] = fill[~mask]
        return out


_DECISION_RE = re.compile(r"^\s*DECISION:\s*(ACCEPT|REJECT|STOP)\b", re.IGNORECASE | re.MULTILINE)


class ScriptedVlm:
    """VLM stand-in: canned scripts or deterministic threshold rules.

    Sessions keep independent histories. With no script configured, replies
    come from the threshold rules: the 2D session rejects candidates with too
    many unfilled (near-black) pixels, the 3D session parses the metric table
    and applies the psnr/ssim floors, the director session emits a fresh
    exploration prompt each call.
    """

    def __init__(
        self,
        script: dict[str, list[str]] | list[str] | None = None,
        thresholds: VerifierThresholds | None = None,
    ):
        self.thresholds = thresholds if thresholds is not None else VerifierThresholds()
        self._script: dict[str, list[str]] = {}
        self._shared_script: list[str] = []
        if isinstance(script, dict):
            self._script = {k: list(v) for k, v in script.items()}
        elif script is not None:
            self._shared_script = list(script)
        self._history: dict[str, list] = {}
        self._director_calls = 0

    def history_length(self, session: str) -> int:
        return len(self._history.get(session, []))

    def chat(self, session: str, system: str, turns) -> str:
        transcript = self._history.setdefault(session, [])
        transcript.extend(turns)
        reply = self.reply_for(session, system, transcript)
        transcript.append(("assistant", reply))
        return reply

    def reply_for(self, session: str, system: str, turns) -> str:
        """Stateless decision over a transcript; also used by the wire server."""
        if session in self._script and self._script[session]:
            return self._script[session].pop(0)
        if self._shared_script:
            return self._shared_script.pop(0)

        if session == "director":
            self._director_calls += 1
            return (
                f"PROMPT: continue the sweep, revealing the adjacent part of the "
                f"scene (view request {self._director_calls})"
            )
        if session == "verify_2d":
            return self._verify_2d(turns)
        if session == "verify_3d":
            return self._verify_3d(turns)
        return "DECISION: REJECT\nREASON: unknown session"

    def _verify_2d(self, turns) -> str:
        image = None
        for kind, value in reversed([t for t in turns if t[0] != "assistant"]):
            if kind == "image":
                image = value
                break
        if image is None:
            return "DECISION: REJECT\nREASON: no candidate image supplied"
        dark = np.all(image < self.thresholds.black_level, axis=-1)
        fraction = float(dark.mean())
        if fraction > self.thresholds.max_black_fraction:
            return (
                f"DECISION: REJECT\nREASON: {fraction:.1%} of pixels are unfilled "
                f"(limit {self.thresholds.max_black_fraction:.0%})"
            )
        return f"DECISION: ACCEPT\nREASON: {fraction:.1%} unfilled pixels"

    def _verify_3d(self, turns) -> str:
        table = None
        for kind, value in reversed([t for t in turns if t[0] != "assistant"]):
            if kind == "text" and "RENDER-BACK METRIC TABLE" in value:
                table = value
                break
        if table is None:
            return "DECISION: REJECT\nREASON: no metric table supplied"
        try:
            summary = parse_metric_summary(table)
        except ValueError:
            return "DECISION: REJECT\nREASON: unreadable metric table"
        min_psnr = summary.get("min_psnr")
        min_ssim = summary.get("min_ssim")
        if min_psnr is None or min_ssim is None:
            return "DECISION: REJECT\nREASON: incomplete metric table"
        if min_psnr < self.thresholds.min_psnr_db:
            return (
                f"DECISION: REJECT\nREASON: min psnr {min_psnr:.2f} dB below "
                f"{self.thresholds.min_psnr_db:.2f} dB"
            )
        if min_ssim < self.thresholds.min_ssim:
            return (
                f"DECISION: REJECT\nREASON: min ssim {min_ssim:.3f} below "
                f"{self.thresholds.min_ssim:.3f}"
            )
        return (
            f"DECISION: ACCEPT\nREASON: min psnr {min_psnr:.2f} dB, "
            f"min ssim {min_ssim:.3f}"
        )


def serve_oracle(scene: OracleScene, role: OracleRole, config: OracleConfig | None = None):
    """Single-role in-process backend handle."""
    config = config if config is not None else OracleConfig()
    if role is OracleRole.RECONSTRUCTOR:
        return OracleReconstructor(scene, config)
    if role is OracleRole.SCRIPTED_VLM:
        return ScriptedVlm(thresholds=config.thresholds)
    return OracleGenerator(scene, config, role)


def oracle_backends(
    scene_seed: int,
    config: OracleConfig | None = None,
    generator_role: OracleRole = OracleRole.PERFECT_GENERATOR,
    vlm: ScriptedVlm | None = None,
) -> BackendSet:
    """Full backend quartet over one scene, with the pose hint wired through."""
    config = config if config is not None else OracleConfig()
    scene = build_scene(scene_seed)
    hint = PoseHint()
    return BackendSet(
        generator=OracleGenerator(scene, config, generator_role, hint),
        vlm=vlm if vlm is not None else ScriptedVlm(thresholds=config.thresholds),
        reconstructor=OracleReconstructor(scene, config, hint),
        lpips=None,
    )
