"""Depth-buffered pinhole raycaster over the oracle scene's rectangles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import CameraPose
from ..imaging import as_uint8
from .scene import _UV_AXES, OracleScene, texture_rgb

DEFAULT_FOV_DEGREES = 60.0


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel camera-space depth (-z_cam) in scene units, +inf where empty."""

    values: np.ndarray

    def __post_init__(self):
        finite = self.values[np.isfinite(self.values)]
        if finite.size and finite.min() <= 0:
            raise ValueError("finite depths must be positive")


def ray_grid(resolution: int, fov_degrees: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (x, y) tangent-plane coordinates at z_cam = -1."""
    tanf = math.tan(math.radians(fov_degrees) / 2.0)
    centers = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    xs = centers * tanf  # +x right
    ys = -centers * tanf  # +y up, row 0 at the top
    return np.meshgrid(xs, ys)


def render(
    scene: OracleScene,
    pose: CameraPose,
    resolution: int,
    fov_degrees: float = DEFAULT_FOV_DEGREES,
) -> tuple[np.ndarray, DepthImage]:
    """Raycast the scene. Depth equals camera-space -z, so t along the
    unnormalized ray (z component -1) is the depth directly."""
    gx, gy = ray_grid(resolution, fov_degrees)
    dirs_cam = np.stack([gx, gy, -np.ones_like(gx)], axis=-1)
    rot = pose.rotation
    origin = pose.position
    dirs = dirs_cam @ rot.T  # world-space, unnormalized

    depth = np.full((resolution, resolution), np.inf)
    face_idx = np.full((resolution, resolution), -1, dtype=np.int32)
    hit_u = np.zeros((resolution, resolution))
    hit_v = np.zeros((resolution, resolution))

    faces = scene.all_faces()
    for fi, face in enumerate(faces):
        d_axis = dirs[..., face.axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (face.coord - origin[face.axis]) / d_axis
        ua, va = _UV_AXES[face.axis]
        pu = origin[ua] + t * dirs[..., ua]
        pv = origin[va] + t * dirs[..., va]
        hit = (
            np.isfinite(t)
            & (t > 1e-9)
            & (t < depth)
            & (pu >= face.u_range[0])
            & (pu <= face.u_range[1])
            & (pv >= face.v_range[0])
            & (pv <= face.v_range[1])
        )
        depth[hit] = t[hit]
        face_idx[hit] = fi
        hit_u[hit] = pu[hit]
        hit_v[hit] = pv[hit]

    img = np.zeros((resolution, resolution, 3))
    for fi, face in enumerate(faces):
        sel = face_idx == fi
        if sel.any():
            img[sel] = texture_rgb(face.texture_id, hit_u[sel], hit_v[sel])
    return as_uint8(img), DepthImage(depth)
