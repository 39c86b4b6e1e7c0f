"""Procedural ground-truth environment: a textured room with boxes inside.

The camera starts at the origin inside an enclosing room, so every viewing
direction hits geometry and rendered frames never contain background holes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# free-axis pairs used for face-local texture coordinates
_UV_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


@dataclass(frozen=True)
class Plane:
    """Axis-aligned rectangle: constant along `axis` at `coord`."""

    axis: int
    coord: float
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    texture_id: int


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]  # full extents per axis
    texture_ids: tuple[int, int, int, int, int, int]  # -x,+x,-y,+y,-z,+z

    def faces(self) -> list[Plane]:
        c = np.asarray(self.center)
        h = np.asarray(self.size) / 2.0
        out = []
        k = 0
        for axis in range(3):
            ua, va = _UV_AXES[axis]
            for side in (-1.0, 1.0):
                out.append(
                    Plane(
                        axis=axis,
                        coord=float(c[axis] + side * h[axis]),
                        u_range=(float(c[ua] - h[ua]), float(c[ua] + h[ua])),
                        v_range=(float(c[va] - h[va]), float(c[va] + h[va])),
                        texture_id=self.texture_ids[k],
                    )
                )
                k += 1
        return out


@dataclass(frozen=True)
class OracleScene:
    primitives: tuple
    seed: int
    bounds_min: tuple[float, float, float]
    bounds_max: tuple[float, float, float]

    def all_faces(self) -> list[Plane]:
        faces = []
        for prim in self.primitives:
            if isinstance(prim, Plane):
                faces.append(prim)
            else:
                faces.extend(prim.faces())
        return faces


def texture_rgb(texture_id: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Deterministic multi-frequency RGB pattern, values within [0.17, 0.95].

    Pure function of (texture_id, surface point); dark enough pixels never
    occur, so black regions in a frame always mean unfilled holes.
    """
    rng = np.random.default_rng(texture_id)
    c0 = rng.uniform(0.2, 0.98, size=3)
    c1 = rng.uniform(0.2, 0.98, size=3)
    f1, f2, f3 = rng.uniform(0.6, 1.8, size=3)
    f4 = rng.uniform(3.0, 5.0)
    p1, p2, p3, p4 = rng.uniform(0.0, 1.0, size=4)

    w1 = 0.5 + 0.5 * np.sin(2 * np.pi * (f1 * u + p1))
    w2 = 0.5 + 0.5 * np.sin(2 * np.pi * (f2 * v + p2))
    w3 = 0.5 + 0.5 * np.sin(2 * np.pi * (f3 * (u + v) + p3))
    # contrast-sharpened blend so misaligned content decorrelates measurably
    t = np.clip(0.5 + 3.0 * ((w1 + w2 + w3) / 3.0 - 0.5), 0.0, 1.0)[..., None]
    base = c0 * t + c1 * (1.0 - t)
    band = 0.5 + 0.5 * np.sin(2 * np.pi * (f4 * (u - v) + p4))
    return base * (0.92 + 0.08 * band[..., None])


def build_scene(seed: int) -> OracleScene:
    """Deterministic room + boxes; identical seeds yield identical scenes."""
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE11E, seed]))

    hx = rng.uniform(3.0, 4.0)
    hy = rng.uniform(2.0, 2.6)
    hz = rng.uniform(3.0, 4.0)

    def tex() -> int:
        return int(rng.integers(0, 2**31 - 1))

    walls = [
        Plane(0, -hx, (-hy, hy), (-hz, hz), tex()),
        Plane(0, +hx, (-hy, hy), (-hz, hz), tex()),
        Plane(1, -hy, (-hx, hx), (-hz, hz), tex()),
        Plane(1, +hy, (-hx, hx), (-hz, hz), tex()),
        Plane(2, -hz, (-hx, hx), (-hy, hy), tex()),
        Plane(2, +hz, (-hx, hx), (-hy, hy), tex()),
    ]

    boxes = []
    for _ in range(int(rng.integers(4, 8))):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        radius = rng.uniform(1.5, 2.6)
        cx = float(np.clip(radius * np.cos(angle), -hx + 0.7, hx - 0.7))
        cz = float(np.clip(radius * np.sin(angle), -hz + 0.7, hz - 0.7))
        cy = float(rng.uniform(-0.8, 0.8))
        size = tuple(float(s) for s in rng.uniform(0.4, 1.1, size=3))
        boxes.append(
            Box(
                center=(cx, cy, cz),
                size=size,
                texture_ids=tuple(tex() for _ in range(6)),
            )
        )

    margin = 0.5
    return OracleScene(
        primitives=tuple(walls + boxes),
        seed=seed,
        bounds_min=(-hx + margin, -hy + margin, -hz + margin),
        bounds_max=(hx - margin, hy - margin, hz - margin),
    )
