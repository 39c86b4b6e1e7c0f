"""Canonical world state: accepted frames, budgets and the stop flag."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, EmptyPrompt, IndexGap, QuotaExceeded
from .geometry import CameraPose, Direction

DEFAULT_MAX_FRAMES = 14
DEFAULT_MAX_TRIES = 28
DEFAULT_STEP_RETRIES = 2


class StopReason(enum.Enum):
    NONE = "none"
    FRAME_QUOTA = "frame_quota"
    TRY_BUDGET = "try_budget"
    DIRECTOR_STOP = "director_stop"


@dataclass
class Budgets:
    max_frames: int = DEFAULT_MAX_FRAMES
    max_tries: int = DEFAULT_MAX_TRIES
    per_step_retries: int = DEFAULT_STEP_RETRIES
    tries_used: int = 0

    def __post_init__(self):
        if min(self.max_frames, self.max_tries, self.per_step_retries) <= 0:
            raise DomainError("budget fields must be positive")
        if not 0 <= self.tries_used <= self.max_tries:
            raise DomainError("tries_used must stay within [0, max_tries]")

    def consume_try(self) -> None:
        if self.tries_used >= self.max_tries:
            raise QuotaExceeded(f"try budget {self.max_tries} exhausted")
        self.tries_used += 1


def _frozen_image(img: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(img, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DomainError(f"frame image must be HxWx3 uint8, got {arr.shape}")
    if arr.shape[0] != arr.shape[1]:
        raise DomainError(f"frame image must be square, got {arr.shape[:2]}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Frame:
    """One verified view: image, absolute pose, the prompt that produced it."""

    image: np.ndarray
    pose: CameraPose
    prompt: str
    index: int
    try_number: int

    def __post_init__(self):
        object.__setattr__(self, "image", _frozen_image(self.image))
        if self.index < 1:
            raise DomainError("frame index is 1-based")

    @property
    def resolution(self) -> int:
        return self.image.shape[0]


@dataclass
class WorldState:
    """The canonical world: an append-only frame list plus budgets."""

    global_prompt: str
    budgets: Budgets
    rng_seed: int
    frames: list[Frame] = field(default_factory=list)
    direction: Direction = Direction.RIGHT
    stopped: StopReason = StopReason.NONE
    working_resolution: int = 512

    def snapshot(self) -> "WorldState":
        """Read-only copy safe to hand to concurrent metric workers."""
        return replace(self, frames=list(self.frames), budgets=replace(self.budgets))


def new_world(
    global_prompt: str,
    budgets: Budgets | None = None,
    seed: int = 0,
    working_resolution: int = 512,
) -> WorldState:
    if not global_prompt or not global_prompt.strip():
        raise EmptyPrompt("global prompt must be non-empty")
    return WorldState(
        global_prompt=global_prompt,
        budgets=budgets if budgets is not None else Budgets(),
        rng_seed=seed,
        working_resolution=working_resolution,
    )


def append_frame(world: WorldState, frame: Frame) -> WorldState:
    """Append an accepted frame in place. Prior frames are never touched."""
    if len(world.frames) >= world.budgets.max_frames:
        raise QuotaExceeded(
            f"world already holds the frame quota of {world.budgets.max_frames}"
        )
    if frame.index != len(world.frames) + 1:
        raise IndexGap(
            f"expected frame index {len(world.frames) + 1}, got {frame.index}"
        )
    if frame.resolution != world.working_resolution:
        raise DomainError(
            f"frame resolution {frame.resolution} != working resolution "
            f"{world.working_resolution}"
        )
    world.frames.append(frame)
    return world


def provisional(world: WorldState, candidate) -> list[Frame]:
    """The frame set W_t plus the candidate, without mutating the world.

    `candidate` is anything with .image, .pose, .prompt and .try_number
    (agents.CandidateFrame in practice).
    """
    extra = Frame(
        image=candidate.image,
        pose=candidate.pose,
        prompt=candidate.prompt,
        index=len(world.frames) + 1,
        try_number=candidate.try_number,
    )
    return list(world.frames) + [extra]
