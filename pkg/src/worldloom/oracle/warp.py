"""Forward depth-warp: reproject posed RGB-D frames into a target view.

This is the desk-scale stand-in for a learned multi-view reconstructor: a
nearest-depth z-buffer splat with a 1-pixel footprint and no hole filling.
"""

from __future__ import annotations

import math

import numpy as np

from ..geometry import CameraPose
from .render import DEFAULT_FOV_DEGREES, DepthImage, ray_grid

# depths within one bucket tie; earlier frames then win, so an inconsistent
# newcomer can never overwrite established surfaces it merely agrees with
DEPTH_BUCKET = 0.05


def unproject(depth: DepthImage, pose: CameraPose, fov_degrees: float) -> tuple[np.ndarray, np.ndarray]:
    """World-space points for every finite-depth pixel (flattened), plus the
    flat pixel selector."""
    res = depth.values.shape[0]
    gx, gy = ray_grid(res, fov_degrees)
    valid = np.isfinite(depth.values).ravel()
    d = depth.values.ravel()[valid]
    rays = np.stack([gx.ravel()[valid], gy.ravel()[valid], -np.ones(d.size)], axis=-1)
    pts_cam = rays * d[:, None]
    pts_world = pts_cam @ pose.rotation.T + pose.position
    return pts_world, valid


def splat(sources, target: CameraPose, resolution: int, fov_degrees: float) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffer splat of prepared (world_points, colors) sources.

    Nearest depth wins; within DEPTH_BUCKET the earliest source wins. Returns
    (uint8 image, bool validity mask); uncovered pixels are black and invalid.
    """
    sources = list(sources)
    tanf = math.tan(math.radians(fov_degrees) / 2.0)
    rot_t = target.rotation
    pos_t = target.position
    stride = max(len(sources), 1)

    idx_parts, key_parts, color_parts = [], [], []
    for prio, (pts_world, colors) in enumerate(sources):
        if pts_world.size == 0:
            continue
        q = (pts_world - pos_t) @ rot_t  # target camera frame
        tgt_depth = -q[:, 2]
        front = tgt_depth > 1e-6
        q, tgt_depth = q[front], tgt_depth[front]
        cols_src = colors[front]

        u = q[:, 0] / (tgt_depth * tanf)
        v = q[:, 1] / (tgt_depth * tanf)
        col = np.rint((u + 1.0) / 2.0 * resolution - 0.5).astype(np.int64)
        row = np.rint((1.0 - v) / 2.0 * resolution - 0.5).astype(np.int64)
        inside = (col >= 0) & (col < resolution) & (row >= 0) & (row < resolution)

        idx_parts.append(row[inside] * resolution + col[inside])
        buckets = np.round(tgt_depth[inside] / DEPTH_BUCKET).astype(np.int64)
        key_parts.append(buckets * stride + prio)
        color_parts.append(cols_src[inside])

    img = np.zeros((resolution * resolution, 3), dtype=np.uint8)
    mask = np.zeros(resolution * resolution, dtype=bool)
    if idx_parts:
        idx = np.concatenate(idx_parts)
        keys = np.concatenate(key_parts)
        colors = np.concatenate(color_parts)
        buf = np.full(resolution * resolution, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(buf, idx, keys)
        winners = keys == buf[idx]
        img[idx[winners]] = colors[winners]
        mask[idx[winners]] = True
    return img.reshape(resolution, resolution, 3), mask.reshape(resolution, resolution)


def warp_reconstruct(
    frames,
    target: CameraPose,
    fov_degrees: float = DEFAULT_FOV_DEGREES,
) -> tuple[np.ndarray, np.ndarray]:
    """Splat (image, depth, pose) frames into the target view."""
    frames = list(frames)
    if not frames:
        raise ValueError("warp_reconstruct needs at least one frame")
    res = frames[0][0].shape[0]
    sources = []
    for image, depth, pose in frames:
        pts_world, valid = unproject(depth, pose, fov_degrees)
        sources.append((pts_world, image.reshape(-1, 3)[valid]))
    return splat(sources, target, res, fov_degrees)
