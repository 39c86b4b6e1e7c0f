"""Durable on-disk manifest for a run: lossless frames plus a JSON index.

Layout under the manifest directory:
    manifest.json       index, schema_version, event log
    frames/frame_0001.png ...   lossless frame images
    config_echo.json    run configuration echo (written by the orchestrator)
    prompts/            prompt template files used by the run
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ImageHashMismatch, ManifestMissing, SchemaVersionMismatch
from .geometry import CameraPose, Direction
from .imaging import decode_png, encode_png, sha256_hex
from .world import Budgets, Frame, StopReason, WorldState

SCHEMA_VERSION = 1


@dataclass
class SceneManifest:
    schema_version: int
    directory: Path
    world: WorldState
    events: list[dict] = field(default_factory=list)


def _frame_filename(index: int) -> str:
    return f"frame_{index:04d}.png"


def _world_index(world: WorldState, hashes: list[str]) -> dict:
    return {
        "global_prompt": world.global_prompt,
        "rng_seed": world.rng_seed,
        "direction": world.direction.value,
        "stopped": world.stopped.value,
        "working_resolution": world.working_resolution,
        "budgets": {
            "max_frames": world.budgets.max_frames,
            "max_tries": world.budgets.max_tries,
            "per_step_retries": world.budgets.per_step_retries,
            "tries_used": world.budgets.tries_used,
        },
        "frames": [
            {
                "index": f.index,
                "try_number": f.try_number,
                "prompt": f.prompt,
                "pose": f.pose.flat(),
                "file": f"frames/{_frame_filename(f.index)}",
                "sha256": h,
            }
            for f, h in zip(world.frames, hashes)
        ],
    }


def save_manifest(world: WorldState, dir_path: str | Path, events: list[dict] | None = None) -> SceneManifest:
    """Write frames and the index. The index write is atomic (tmp + rename)."""
    root = Path(dir_path)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    hashes = []
    for frame in world.frames:
        png = encode_png(frame.image)
        target = frames_dir / _frame_filename(frame.index)
        # accepted frames are immutable: skip rewriting byte-identical files
        if not target.exists() or target.read_bytes() != png:
            tmp = target.with_suffix(".png.tmp")
            tmp.write_bytes(png)
            os.replace(tmp, target)
        hashes.append(sha256_hex(png))

    doc = {
        "schema_version": SCHEMA_VERSION,
        "world": _world_index(world, hashes),
        "events": list(events or []),
    }
    tmp = root / "manifest.json.tmp"
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
    os.replace(tmp, root / "manifest.json")
    return SceneManifest(SCHEMA_VERSION, root, world, doc["events"])


def load_manifest(dir_path: str | Path) -> WorldState:
    """Rebuild the WorldState from disk, verifying every image content hash."""
    root = Path(dir_path)
    index_path = root / "manifest.json"
    if not index_path.is_file():
        raise ManifestMissing(f"no manifest.json under {root}")
    doc = json.loads(index_path.read_text(encoding="utf-8"))
    version = doc.get("schema_version")
    if not isinstance(version, int) or version > SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"manifest schema {version} is newer than supported {SCHEMA_VERSION}"
        )

    w = doc["world"]
    world = WorldState(
        global_prompt=w["global_prompt"],
        budgets=Budgets(
            max_frames=w["budgets"]["max_frames"],
            max_tries=w["budgets"]["max_tries"],
            per_step_retries=w["budgets"]["per_step_retries"],
            tries_used=w["budgets"]["tries_used"],
        ),
        rng_seed=w["rng_seed"],
        direction=Direction(w["direction"]),
        stopped=StopReason(w["stopped"]),
        working_resolution=w["working_resolution"],
    )
    for entry in w["frames"]:
        png = (root / entry["file"]).read_bytes()
        if sha256_hex(png) != entry["sha256"]:
            raise ImageHashMismatch(f"content hash mismatch for {entry['file']}")
        world.frames.append(
            Frame(
                image=decode_png(png),
                pose=CameraPose.from_flat(entry["pose"]),
                prompt=entry["prompt"],
                index=entry["index"],
                try_number=entry["try_number"],
            )
        )
    return world


def load_events(dir_path: str | Path) -> list[dict]:
    root = Path(dir_path)
    index_path = root / "manifest.json"
    if not index_path.is_file():
        raise ManifestMissing(f"no manifest.json under {root}")
    return json.loads(index_path.read_text(encoding="utf-8")).get("events", [])
