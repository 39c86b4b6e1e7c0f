"""Camera poses and the right-then-left trajectory policy.

Convention used everywhere in this package: poses are 4x4 camera-to-world
matrices, right-handed, +Y up, camera looking along its local -Z axis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ROTATION_TOL = 1e-9


class Direction(enum.Enum):
    RIGHT = "right"
    LEFT = "left"


def _check_rigid(matrix: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise DomainError(f"{what} must be 4x4, got {m.shape}")
    r = m[:3, :3]
    if not np.allclose(r @ r.T, np.eye(3), atol=ROTATION_TOL, rtol=0.0):
        raise DomainError(f"{what} rotation block is not orthonormal within {ROTATION_TOL}")
    if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
        raise DomainError(f"{what} rotation block determinant is not +1 within {ROTATION_TOL}")
    if not np.array_equal(m[3], np.array([0.0, 0.0, 0.0, 1.0])):
        raise DomainError(f"{what} bottom row must be exactly (0,0,0,1)")
    m = m.copy()
    m.flags.writeable = False
    return m


@dataclass(frozen=True)
class CameraPose:
    """4x4 camera-to-world rigid transform."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _check_rigid(self.matrix, "CameraPose"))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(4))

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def flat(self) -> list[float]:
        """Row-major 16-number representation used on the wire and in manifests."""
        return [float(v) for v in self.matrix.reshape(-1)]

    @classmethod
    def from_flat(cls, values) -> "CameraPose":
        arr = np.asarray(list(values), dtype=np.float64)
        if arr.size != 16:
            raise DomainError(f"pose needs 16 numbers, got {arr.size}")
        return cls(arr.reshape(4, 4))


@dataclass(frozen=True)
class PoseDelta:
    """Relative rigid transform, same conventions as CameraPose."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _check_rigid(self.matrix, "PoseDelta"))

    @classmethod
    def identity(cls) -> "PoseDelta":
        return cls(np.eye(4))

    def flat(self) -> list[float]:
        return [float(v) for v in self.matrix.reshape(-1)]


@dataclass(frozen=True)
class PerturbationBounds:
    """Half-widths of the uniform jitter applied on top of the fixed yaw."""

    max_translation: float = 0.05
    max_yaw_jitter: float = 3.0
    max_pitch_jitter: float = 2.0

    def __post_init__(self):
        if min(self.max_translation, self.max_yaw_jitter, self.max_pitch_jitter) < 0:
            raise DomainError("perturbation bounds must be non-negative")

    @classmethod
    def zero(cls) -> "PerturbationBounds":
        return cls(0.0, 0.0, 0.0)


def rot_y(degrees: float) -> np.ndarray:
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    m = np.eye(4)
    m[0, 0], m[0, 2] = c, s
    m[2, 0], m[2, 2] = -s, c
    return m


def rot_x(degrees: float) -> np.ndarray:
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    m = np.eye(4)
    m[1, 1], m[1, 2] = c, -s
    m[2, 1], m[2, 2] = s, c
    return m


def fixed_yaw(phi_degrees: float, direction: Direction) -> PoseDelta:
    """Pure rotation of phi degrees about the up-axis; Right is negative yaw."""
    if not 0.0 < phi_degrees < 180.0:
        raise DomainError(f"yaw angle must be in (0, 180), got {phi_degrees}")
    sign = -1.0 if direction is Direction.RIGHT else 1.0
    return PoseDelta(rot_y(sign * phi_degrees))


def sample_perturbation(rng: np.random.Generator, bounds: PerturbationBounds) -> PoseDelta:
    """Uniform per-axis translation plus yaw/pitch jitter. Deterministic in rng state.

    Draw order is fixed (tx, ty, tz, yaw, pitch) so seeded chains replay exactly.
    """
    t = bounds.max_translation
    tx = rng.uniform(-t, t)
    ty = rng.uniform(-t, t)
    tz = rng.uniform(-t, t)
    yaw = rng.uniform(-bounds.max_yaw_jitter, bounds.max_yaw_jitter)
    pitch = rng.uniform(-bounds.max_pitch_jitter, bounds.max_pitch_jitter)
    m = rot_y(yaw) @ rot_x(pitch)
    m[:3, 3] = (tx, ty, tz)
    return PoseDelta(m)


def next_pose(
    pose: CameraPose,
    phi_degrees: float,
    direction: Direction,
    rng: np.random.Generator,
    bounds: PerturbationBounds,
) -> tuple[CameraPose, PoseDelta]:
    """One trajectory step: new pose = T_random @ R_fixed @ pose."""
    r_fixed = fixed_yaw(phi_degrees, direction)
    t_random = sample_perturbation(rng, bounds)
    delta = PoseDelta(t_random.matrix @ r_fixed.matrix)
    return CameraPose(delta.matrix @ pose.matrix), delta


def direction_for(tries_used: int, max_tries: int) -> Direction:
    """Right for the first half of the try budget, Left from ceil(max/2) on."""
    if tries_used < 0 or tries_used > max_tries:
        raise DomainError(f"tries_used {tries_used} outside [0, {max_tries}]")
    return Direction.RIGHT if tries_used < math.ceil(max_tries / 2) else Direction.LEFT
