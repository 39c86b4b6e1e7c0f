"""The end-to-end generation loop: bootstrap, step, budgets, termination.

The loop owns the only mutable world state. Every accepted frame is committed
to the manifest before the next step begins, so an interrupted run loses at
most the in-flight candidate.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import (
    AgentSettings,
    director_next,
    gate,
    generate_candidate,
)
from .errors import (
    CandidateGenerationError,
    DirectorReplyUnparseable,
    DomainError,
    ProtocolError,
)
from .geometry import (
    CameraPose,
    Direction,
    PerturbationBounds,
    PoseDelta,
    direction_for,
    next_pose,
)
from .imaging import encode_png, image_hash
from .manifest import SceneManifest, save_manifest
from .metrics import GlobalProfile
from .oracle import OracleConfig, OracleRole, ScriptedVlm, oracle_backends
from .protocol import BackendEndpoints, BackendSet, build_http_backends
from .world import Budgets, Frame, StopReason, WorldState, append_frame, new_world

logger = logging.getLogger(__name__)

VERIFIER_MODE_VLM = "vlm"
VERIFIER_MODE_THRESHOLD = "threshold"

STOP_BACKEND_FAILURE = "backend_failure"


@dataclass
class RunConfig:
    global_prompt: str
    out_dir: Path
    budgets: Budgets = field(default_factory=Budgets)
    yaw_degrees: float = 20.0
    bounds: PerturbationBounds = field(default_factory=PerturbationBounds)
    working_resolution: int = 512
    recon_resolution: int = 448
    fov_degrees: float = 60.0
    seed: int = 0
    prompt_dir: Path | None = None
    verifier_mode: str = VERIFIER_MODE_THRESHOLD
    endpoints: BackendEndpoints | None = None
    oracle_scene_seed: int | None = None
    oracle_generator_role: OracleRole = OracleRole.PERFECT_GENERATOR
    recent_world_images: int = 3
    max_metric_pairs: int = 6
    backend_abort_ceiling: int = 5
    log_rejected_images: bool = False  # metadata is always logged; bytes opt-in

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.working_resolution <= 0 or self.recon_resolution <= 0:
            raise DomainError("resolutions must be positive")
        if self.recon_resolution > self.working_resolution:
            raise DomainError("reconstructor resolution must not exceed working resolution")
        if self.verifier_mode not in (VERIFIER_MODE_VLM, VERIFIER_MODE_THRESHOLD):
            raise DomainError(f"unknown verifier mode {self.verifier_mode!r}")

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(
            working_resolution=self.working_resolution,
            recon_resolution=self.recon_resolution,
            fov_degrees=self.fov_degrees,
        )

    def agent_settings(self) -> AgentSettings:
        return AgentSettings(
            working_resolution=self.working_resolution,
            recon_resolution=self.recon_resolution,
            recent_world_images=self.recent_world_images,
            max_metric_pairs=self.max_metric_pairs,
            prompt_dir=self.prompt_dir,
        )


@dataclass
class RunReport:
    accepted_count: int
    tries_used: int
    stop_reason: str
    events: list[dict]
    duration_secs: float

    def to_json(self) -> dict:
        return {
            "accepted_count": self.accepted_count,
            "tries_used": self.tries_used,
            "stop_reason": self.stop_reason,
            "events": self.events,
            "duration_secs": self.duration_secs,
        }


@dataclass
class StepOutcome:
    kind: str  # accepted | rejected | stopped
    frame: Frame | None = None
    reason: str = ""


def build_backends(config: RunConfig) -> BackendSet:
    """Wire the backend quartet from the run configuration."""
    if config.oracle_scene_seed is not None:
        backends = oracle_backends(
            config.oracle_scene_seed,
            config.oracle_config(),
            generator_role=config.oracle_generator_role,
        )
        if config.verifier_mode == VERIFIER_MODE_VLM and config.endpoints is not None:
            backends.vlm = build_http_backends(config.endpoints).vlm
        return backends
    if config.endpoints is None:
        raise DomainError("config needs either oracle_scene_seed or endpoints")
    backends = build_http_backends(
        config.endpoints, config.working_resolution, config.recon_resolution
    )
    if config.verifier_mode == VERIFIER_MODE_THRESHOLD:
        backends.vlm = ScriptedVlm()
    return backends


@dataclass
class _StepPlan:
    prompt: str
    pose: CameraPose
    delta: "PoseDelta"
    direction: Direction
    failures: int = 0


class _Abort(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class Orchestrator:
    """Single-writer driver for one run."""

    def __init__(self, config: RunConfig, backends: BackendSet | None = None):
        self.config = config
        self.backends = backends if backends is not None else build_backends(config)
        self.settings = config.agent_settings()
        self.world = new_world(
            config.global_prompt,
            Budgets(
                max_frames=config.budgets.max_frames,
                max_tries=config.budgets.max_tries,
                per_step_retries=config.budgets.per_step_retries,
            ),
            seed=config.seed,
            working_resolution=config.working_resolution,
        )
        self.rng = np.random.default_rng(config.seed)
        self.events: list[dict] = []
        self._plan: _StepPlan | None = None
        self._phase = Direction.RIGHT
        self._chain_pose = CameraPose.identity()
        self._backend_failures_in_a_row = 0
        self.after_accept = None  # optional hook fired after each manifest commit
        self.on_event = None  # optional hook fired for every event record
        self.config.out_dir.mkdir(parents=True, exist_ok=True)
        self._events_path = self.config.out_dir / "events.jsonl"
        # one run owns one event stream; a crashed run's events survive in
        # its committed manifest
        self._events_path.write_text("", encoding="utf-8")
        self._copy_prompt_templates()

    def _copy_prompt_templates(self) -> None:
        """Snapshot the template files used into the manifest directory."""
        from .agents import SESSION_DIRECTOR, SESSION_VERIFY_2D, SESSION_VERIFY_3D, load_template

        prompt_dir = self.config.out_dir / "prompts"
        prompt_dir.mkdir(exist_ok=True)
        names = {
            SESSION_DIRECTOR: "director.md",
            SESSION_VERIFY_2D: "verifier_2d.md",
            SESSION_VERIFY_3D: "verifier_3d.md",
        }
        for session, filename in names.items():
            text = load_template(session, self.config.prompt_dir)
            (prompt_dir / filename).write_text(text, encoding="utf-8")

    # --- event plumbing ---------------------------------------------------

    def _emit(self, event: dict) -> None:
        self.events.append(event)
        with self._events_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({**event, "ts": time.time()}, sort_keys=True) + "\n")
        if self.on_event is not None:
            self.on_event(event)

    def _commit(self) -> SceneManifest:
        return save_manifest(self.world, self.config.out_dir, self.events)

    # --- run phases ---------------------------------------------------------

    def bootstrap(self) -> WorldState:
        """Frame 1: plain text-to-image at the identity pose, ungated."""
        try:
            image = self.backends.generator.txt2img(self.world.global_prompt)
        except ProtocolError as exc:
            self._emit({"kind": "abort", "phase": "bootstrap", "error": str(exc)})
            raise _Abort(STOP_BACKEND_FAILURE) from exc
        self.world.budgets.consume_try()
        frame = Frame(
            image=image,
            pose=CameraPose.identity(),
            prompt=self.world.global_prompt,
            index=1,
            try_number=self.world.budgets.tries_used,
        )
        append_frame(self.world, frame)
        self._chain_pose = frame.pose
        self._emit(
            {
                "kind": "bootstrap",
                "try": self.world.budgets.tries_used,
                "frame": 1,
                "pose": frame.pose.flat(),
                "image_sha256": image_hash(image),
            }
        )
        self._commit()
        if self.after_accept is not None:
            self.after_accept(len(self.world.frames))
        return self.world

    def _refresh_plan(self, direction: Direction) -> StepOutcome | None:
        """Consult the director and sample a fresh target pose."""
        step_index = len(self.world.frames) + 1
        try:
            decision = director_next(self.world, direction, self.backends.vlm, self.settings)
        except (ProtocolError, DirectorReplyUnparseable) as exc:
            self._backend_failures_in_a_row += 1
            self._emit({"kind": "director", "step": step_index, "error": str(exc)})
            if self._backend_failures_in_a_row >= self.config.backend_abort_ceiling:
                raise _Abort(STOP_BACKEND_FAILURE) from exc
            return StepOutcome(kind="rejected", reason=f"director failure: {exc}")
        # a successful director call is not a try: only a clean try resets
        # the consecutive-failure count
        self._emit(
            {
                "kind": "director",
                "step": step_index,
                "try_at": self.world.budgets.tries_used,
                "direction": direction.value,
                "decision": "stop" if decision.stop else "prompt",
                "prompt": decision.prompt,
            }
        )
        if decision.stop:
            self.world.stopped = StopReason.DIRECTOR_STOP
            return StepOutcome(kind="stopped", reason="director_stop")
        pose, delta = next_pose(
            self._chain_pose,
            self.config.yaw_degrees,
            direction,
            self.rng,
            self.config.bounds,
        )
        self._plan = _StepPlan(prompt=decision.prompt, pose=pose, delta=delta, direction=direction)
        return None

    def step(self) -> StepOutcome:
        """One candidate generation attempt against the current world."""
        direction = direction_for(
            self.world.budgets.tries_used, self.world.budgets.max_tries
        )
        self.world.direction = direction
        if direction is Direction.LEFT and self._phase is Direction.RIGHT:
            # the left sweep restarts from the very first frame's pose
            self._phase = Direction.LEFT
            self._chain_pose = self.world.frames[0].pose

        if (
            self._plan is None
            or self._plan.direction is not direction
            or self._plan.failures >= self.world.budgets.per_step_retries
        ):
            stopped = self._refresh_plan(direction)
            if stopped is not None:
                return stopped

        plan = self._plan
        self.world.budgets.consume_try()
        try_number = self.world.budgets.tries_used
        step_index = len(self.world.frames) + 1
        base_event = {
            "kind": "try",
            "try": try_number,
            "step": step_index,
            "direction": direction.value,
            "prompt": plan.prompt,
            "pose": plan.pose.flat(),
            "delta": plan.delta.flat(),
        }

        try:
            candidate = generate_candidate(
                self.world,
                plan.pose,
                plan.prompt,
                self.backends.reconstructor,
                self.backends.generator,
                self.settings,
                try_number=try_number,
            )
            verdict = gate(candidate, self.world, self.backends, self.settings)
        except (CandidateGenerationError, ProtocolError) as exc:
            plan.failures += 1
            self._backend_failures_in_a_row += 1
            phase = exc.phase if isinstance(exc, CandidateGenerationError) else "verify"
            self._emit(
                {
                    **base_event,
                    "verdict": "rejected",
                    "reason": f"{STOP_BACKEND_FAILURE}:{phase}",
                    "error": str(exc),
                }
            )
            if self._backend_failures_in_a_row >= self.config.backend_abort_ceiling:
                raise _Abort(STOP_BACKEND_FAILURE) from exc
            return StepOutcome(kind="rejected", reason=f"{STOP_BACKEND_FAILURE}:{phase}")

        self._backend_failures_in_a_row = 0
        verdict_event = {
            **base_event,
            "image_sha256": image_hash(candidate.image),
            "v2d": {"accepted": verdict.v2d.accepted, "reason": verdict.v2d.reason},
            "v3d": (
                {"accepted": verdict.v3d.accepted, "reason": verdict.v3d.reason}
                if verdict.v3d is not None
                else None
            ),
            "metrics": _summary_dict(verdict.profile),
        }

        if verdict.final:
            frame = Frame(
                image=candidate.image,
                pose=candidate.pose,
                prompt=candidate.prompt,
                index=step_index,
                try_number=try_number,
            )
            append_frame(self.world, frame)
            self._chain_pose = frame.pose
            self._plan = None
            self._emit({**verdict_event, "verdict": "accepted"})
            self._commit()
            if self.after_accept is not None:
                self.after_accept(len(self.world.frames))
            return StepOutcome(kind="accepted", frame=frame)

        plan.failures += 1
        reason = verdict.v2d.reason if not verdict.v2d.accepted else verdict.v3d.reason
        if self.config.log_rejected_images:
            rejected_dir = self.config.out_dir / "rejected"
            rejected_dir.mkdir(exist_ok=True)
            (rejected_dir / f"try_{try_number:04d}.png").write_bytes(
                encode_png(candidate.image)
            )
        self._emit({**verdict_event, "verdict": "rejected", "reason": reason})
        return StepOutcome(kind="rejected", reason=reason)

    def run(self) -> tuple[SceneManifest, RunReport]:
        start = time.monotonic()
        stop_reason = STOP_BACKEND_FAILURE
        try:
            self.bootstrap()
            while True:
                if len(self.world.frames) >= self.world.budgets.max_frames:
                    self.world.stopped = StopReason.FRAME_QUOTA
                    break
                if self.world.budgets.tries_used >= self.world.budgets.max_tries:
                    self.world.stopped = StopReason.TRY_BUDGET
                    break
                outcome = self.step()
                if outcome.kind == "stopped":
                    break
            stop_reason = self.world.stopped.value
            self._emit({"kind": "stop", "reason": stop_reason})
            self._export_final_renders()
        except _Abort as abort:
            stop_reason = abort.reason
            self._emit({"kind": "stop", "reason": stop_reason})
        manifest = self._commit()
        report = RunReport(
            accepted_count=len(self.world.frames),
            tries_used=self.world.budgets.tries_used,
            stop_reason=stop_reason,
            events=self.events,
            duration_secs=time.monotonic() - start,
        )
        report_path = self.config.out_dir / "report.json"
        report_path.write_text(json.dumps(report.to_json(), indent=1), encoding="utf-8")
        (self.config.out_dir / "config_echo.json").write_text(
            json.dumps(_config_echo(self.config), indent=1, sort_keys=True),
            encoding="utf-8",
        )
        return manifest, report

    def _export_final_renders(self) -> None:
        """Render the finished world back from every accepted pose."""
        if not self.world.frames:
            return
        from .imaging import area_resize  # local import to avoid cycle noise

        frames_small = [
            (area_resize(f.image, self.config.recon_resolution), f.pose)
            for f in self.world.frames
        ]
        poses = [f.pose for f in self.world.frames]
        try:
            renders = self.backends.reconstructor.reconstruct_render(frames_small, poses)
        except ProtocolError as exc:
            logger.warning("final render export failed: %s", exc)
            self._emit({"kind": "final_export", "error": str(exc)})
            return
        out = self.config.out_dir / "final_renders"
        out.mkdir(exist_ok=True)
        for i, (img, mask) in enumerate(renders, start=1):
            (out / f"render_{i:04d}.png").write_bytes(encode_png(img))
            (out / f"render_{i:04d}.valid.png").write_bytes(
                encode_png((mask.astype(np.uint8) * 255))
            )
        self._emit({"kind": "final_export", "count": len(renders)})


def _summary_dict(profile: GlobalProfile | None) -> dict | None:
    if profile is None:
        return None
    s = profile.summary
    return {
        "min_psnr": s.min_psnr,
        "mean_psnr": s.mean_psnr,
        "min_ssim": s.min_ssim,
        "mean_ssim": s.mean_ssim,
        "min_lpips": s.min_lpips,
        "mean_lpips": s.mean_lpips,
    }


def _config_echo(config: RunConfig) -> dict:
    return {
        "global_prompt": config.global_prompt,
        "budgets": {
            "max_frames": config.budgets.max_frames,
            "max_tries": config.budgets.max_tries,
            "per_step_retries": config.budgets.per_step_retries,
        },
        "yaw_degrees": config.yaw_degrees,
        "bounds": {
            "max_translation": config.bounds.max_translation,
            "max_yaw_jitter": config.bounds.max_yaw_jitter,
            "max_pitch_jitter": config.bounds.max_pitch_jitter,
        },
        "working_resolution": config.working_resolution,
        "recon_resolution": config.recon_resolution,
        "fov_degrees": config.fov_degrees,
        "seed": config.seed,
        "verifier_mode": config.verifier_mode,
        "oracle_scene_seed": config.oracle_scene_seed,
        "oracle_generator_role": config.oracle_generator_role.value,
    }


def run(config: RunConfig, backends: BackendSet | None = None) -> tuple[SceneManifest, RunReport]:
    return Orchestrator(config, backends).run()


def exit_code_for(report: RunReport) -> int:
    """0 on natural completion, 2 on try-budget exhaustion, 3 on abort."""
    if report.stop_reason in (StopReason.FRAME_QUOTA.value, StopReason.DIRECTOR_STOP.value):
        return 0
    if report.stop_reason == StopReason.TRY_BUDGET.value:
        return 2
    return 3
