"""Director, Generator and two-stage Verifier decision logic.

All three speak to backends through the duck-typed BackendSet interface, so
they run identically against HTTP services and the in-process oracle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    CandidateGenerationError,
    DirectorReplyUnparseable,
    DomainError,
    EmptyInput,
    ProtocolError,
)
from .geometry import CameraPose, Direction
from .imaging import area_resize, nearest_resize
from .metrics import GlobalProfile, format_metric_table, frame_profile, profile_from_triples
from .world import WorldState, provisional

SESSION_DIRECTOR = "director"
SESSION_VERIFY_2D = "verify_2d"
SESSION_VERIFY_3D = "verify_3d"

_TEMPLATE_FILES = {
    SESSION_DIRECTOR: "director.md",
    SESSION_VERIFY_2D: "verifier_2d.md",
    SESSION_VERIFY_3D: "verifier_3d.md",
}

_STOP_RE = re.compile(r"^\s*DECISION:\s*STOP\b", re.IGNORECASE | re.MULTILINE)
_PROMPT_RE = re.compile(r"PROMPT:\s*(.+)", re.IGNORECASE | re.DOTALL)
_VERDICT_RE = re.compile(r"^\s*DECISION:\s*(ACCEPT|REJECT)\b", re.IGNORECASE | re.MULTILINE)
_REASON_RE = re.compile(r"^\s*REASON:\s*(.+)$", re.IGNORECASE | re.MULTILINE)


@dataclass
class AgentSettings:
    working_resolution: int = 512
    recon_resolution: int = 448
    recent_world_images: int = 3  # how much of W_t the 2D verifier sees
    max_metric_pairs: int = 6  # worst-psnr image pairs shipped to the 3D verifier
    prompt_dir: Path | None = None  # None: packaged templates


@dataclass(frozen=True)
class DirectorDecision:
    prompt: str | None

    @property
    def stop(self) -> bool:
        return self.prompt is None


@dataclass
class CandidateFrame:
    """A proposed view before gating."""

    image: np.ndarray
    pose: CameraPose
    prompt: str
    warp_image: np.ndarray
    warp_mask: np.ndarray
    try_number: int

    def __post_init__(self):
        if self.image.shape != self.warp_image.shape:
            raise DomainError("candidate image and warp must share dimensions")


@dataclass(frozen=True)
class StageVerdict:
    accepted: bool
    reason: str


@dataclass
class Verdict:
    v2d: StageVerdict
    v3d: StageVerdict | None
    profile: GlobalProfile | None

    @property
    def final(self) -> bool:
        return self.v2d.accepted and self.v3d is not None and self.v3d.accepted


def load_template(session: str, prompt_dir: Path | None = None) -> str:
    name = _TEMPLATE_FILES[session]
    if prompt_dir is not None:
        return (Path(prompt_dir) / name).read_text(encoding="utf-8")
    return (resources.files("worldloom") / "prompts" / name).read_text(encoding="utf-8")


def render_template(text: str, **variables) -> str:
    for key, value in variables.items():
        text = text.replace("{" + key + "}", str(value))
    return text


def _parse_stage_verdict(reply: str) -> StageVerdict | None:
    m = _VERDICT_RE.search(reply)
    if m is None:
        return None
    reason_match = _REASON_RE.search(reply)
    reason = reason_match.group(1).strip() if reason_match else reply.strip()
    return StageVerdict(accepted=m.group(1).upper() == "ACCEPT", reason=reason)


# --- director ----------------------------------------------------------------

def director_next(
    world: WorldState,
    direction: Direction,
    vlm,
    settings: AgentSettings | None = None,
) -> DirectorDecision:
    """Ask the director for the next view prompt, or a stop signal."""
    settings = settings or AgentSettings()
    if not world.frames:
        raise EmptyInput("the director needs at least one accepted frame")

    step = len(world.frames) + 1
    system = render_template(
        load_template(SESSION_DIRECTOR, settings.prompt_dir),
        global_prompt=world.global_prompt,
        direction=direction.value,
        step=step,
    )
    prior = "\n".join(f"{f.index}. {f.prompt}" for f in world.frames)
    turns = [
        (
            "text",
            f"Scene goal: {world.global_prompt}\n"
            f"We are exploring to the {direction.value}. This will be view {step}.\n"
            f"Prompts used so far:\n{prior}\n"
            f"Recent accepted views follow.",
        )
    ]
    for frame in world.frames[-settings.recent_world_images :]:
        turns.append(("image", frame.image))
    turns.append(("text", "Reply with `PROMPT: <view prompt>` or `DECISION: STOP`."))

    reply = vlm.chat(SESSION_DIRECTOR, system, turns)
    decision = _parse_director_reply(reply)
    if decision is not None:
        return decision

    reply = vlm.chat(
        SESSION_DIRECTOR,
        system,
        [("text", "Your reply was empty. Answer `PROMPT: <text>` or `DECISION: STOP`.")],
    )
    decision = _parse_director_reply(reply)
    if decision is None:
        raise DirectorReplyUnparseable(f"director reply unusable after reprompt: {reply!r}")
    return decision


def _parse_director_reply(reply: str) -> DirectorDecision | None:
    if _STOP_RE.search(reply):
        return DirectorDecision(prompt=None)
    m = _PROMPT_RE.search(reply)
    if m:
        text = m.group(1).strip()
        return DirectorDecision(prompt=text) if text else None
    text = reply.strip()
    return DirectorDecision(prompt=text) if text else None


# --- generator ---------------------------------------------------------------

def generate_candidate(
    world: WorldState,
    pose: CameraPose,
    prompt: str,
    reconstructor,
    generator,
    settings: AgentSettings | None = None,
    try_number: int = 0,
) -> CandidateFrame:
    """Warp the current world into the new pose and inpaint the holes."""
    settings = settings or AgentSettings()
    if not world.frames:
        raise EmptyInput("candidate generation needs an established world")

    frames_small = [
        (area_resize(f.image, settings.recon_resolution), f.pose) for f in world.frames
    ]
    try:
        renders = reconstructor.reconstruct_render(frames_small, [pose])
    except ProtocolError as exc:
        raise CandidateGenerationError("reconstruct", exc) from exc
    warp_small, mask_small = renders[0]

    warp = nearest_resize(warp_small, settings.working_resolution)
    mask = nearest_resize(mask_small, settings.working_resolution)
    warp[~mask] = 0

    try:
        image = generator.inpaint(warp, mask, prompt)
    except ProtocolError as exc:
        raise CandidateGenerationError("inpaint", exc) from exc
    if image.shape[0] != settings.working_resolution or image.shape[0] != image.shape[1]:
        raise CandidateGenerationError(
            "inpaint",
            DomainError(f"generator returned {image.shape}, expected square "
                        f"{settings.working_resolution}"),
        )
    return CandidateFrame(
        image=image,
        pose=pose,
        prompt=prompt,
        warp_image=warp,
        warp_mask=mask,
        try_number=try_number,
    )


# --- verifiers ---------------------------------------------------------------

def verify_2d(
    candidate: CandidateFrame,
    world: WorldState,
    vlm,
    settings: AgentSettings | None = None,
) -> StageVerdict:
    """Semantic/artifact screening of the candidate image. Fail-closed."""
    settings = settings or AgentSettings()
    system = render_template(
        load_template(SESSION_VERIFY_2D, settings.prompt_dir),
        global_prompt=world.global_prompt,
        step=len(world.frames) + 1,
    )
    turns = [
        (
            "text",
            f"View prompt for the candidate: {candidate.prompt}\n"
            f"Recent accepted views follow, then the candidate image last.",
        )
    ]
    for frame in world.frames[-settings.recent_world_images :]:
        turns.append(("image", frame.image))
    turns.append(("text", "Candidate image:"))
    turns.append(("image", candidate.image))

    reply = vlm.chat(SESSION_VERIFY_2D, system, turns)
    verdict = _parse_stage_verdict(reply)
    if verdict is None:
        reply = vlm.chat(
            SESSION_VERIFY_2D,
            system,
            [("text", "Answer with `DECISION: ACCEPT` or `DECISION: REJECT`.")],
        )
        verdict = _parse_stage_verdict(reply)
    if verdict is None:
        return StageVerdict(accepted=False, reason="unparseable")
    return verdict


def verify_3d(
    candidate: CandidateFrame,
    world: WorldState,
    reconstructor,
    vlm,
    lpips=None,
    settings: AgentSettings | None = None,
) -> tuple[StageVerdict, GlobalProfile]:
    """Render-back check over the provisional world W'. Fail-closed."""
    settings = settings or AgentSettings()
    frames = provisional(world, candidate)
    inputs = [area_resize(f.image, settings.recon_resolution) for f in frames]
    poses = [f.pose for f in frames]

    renders = reconstructor.reconstruct_render(list(zip(inputs, poses)), poses)
    triples = [
        frame_profile(inputs[i], renders[i][0], lpips) for i in range(len(frames))
    ]
    profile = profile_from_triples(triples)
    table = format_metric_table(profile)

    worst = sorted(range(len(triples)), key=lambda i: triples[i].psnr)
    selected = sorted(worst[: settings.max_metric_pairs])

    system = render_template(
        load_template(SESSION_VERIFY_3D, settings.prompt_dir),
        global_prompt=world.global_prompt,
        metric_table=table,
        step=len(world.frames) + 1,
    )
    turns = [
        (
            "text",
            f"Provisional world holds {len(frames)} frames (last one is the "
            f"candidate). Worst render-back pairs follow as (input, render).",
        )
    ]
    for i in selected:
        turns.append(("text", f"Frame {i + 1}: input then render-back."))
        turns.append(("image", inputs[i]))
        turns.append(("image", renders[i][0]))
    turns.append(("text", table))

    reply = vlm.chat(SESSION_VERIFY_3D, system, turns)
    verdict = _parse_stage_verdict(reply)
    if verdict is None:
        reply = vlm.chat(
            SESSION_VERIFY_3D,
            system,
            [("text", "Answer with `DECISION: ACCEPT` or `DECISION: REJECT`.")],
        )
        verdict = _parse_stage_verdict(reply)
    if verdict is None:
        verdict = StageVerdict(accepted=False, reason="unparseable")
    return verdict, profile


def gate(
    candidate: CandidateFrame,
    world: WorldState,
    backends,
    settings: AgentSettings | None = None,
    force_both: bool = False,
) -> Verdict:
    """Conjunction gate: 2D first, 3D only if 2D accepted (unless forced)."""
    settings = settings or AgentSettings()
    v2d = verify_2d(candidate, world, backends.vlm, settings)
    if not v2d.accepted and not force_both:
        return Verdict(v2d=v2d, v3d=None, profile=None)
    v3d, profile = verify_3d(
        candidate, world, backends.reconstructor, backends.vlm, backends.lpips, settings
    )
    return Verdict(v2d=v2d, v3d=v3d, profile=profile)
