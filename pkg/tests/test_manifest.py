import json

import numpy as np
import pytest

from worldloom.errors import ImageHashMismatch, ManifestMissing, SchemaVersionMismatch
from worldloom.manifest import SCHEMA_VERSION, load_events, load_manifest, save_manifest
from worldloom.world import append_frame, new_world

from .test_world import make_frame


def build_world(n=3, res=32):
    w = new_world("a tidy kitchen", seed=5, working_resolution=res)
    for i in range(1, n + 1):
        append_frame(w, make_frame(i, res=res))
    return w


def test_roundtrip_images_and_poses(tmp_path):
    w = build_world()
    save_manifest(w, tmp_path, events=[{"kind": "bootstrap", "try": 1}])
    loaded = load_manifest(tmp_path)

    assert loaded.global_prompt == w.global_prompt
    assert loaded.budgets.tries_used == w.budgets.tries_used
    assert len(loaded.frames) == 3
    for orig, back in zip(w.frames, loaded.frames):
        assert np.array_equal(orig.image, back.image)
        assert np.max(np.abs(orig.pose.matrix - back.pose.matrix)) < 1e-12
        assert orig.prompt == back.prompt
    assert load_events(tmp_path) == [{"kind": "bootstrap", "try": 1}]


def test_load_missing_manifest(tmp_path):
    with pytest.raises(ManifestMissing):
        load_manifest(tmp_path)


def test_corrupted_image_detected(tmp_path):
    save_manifest(build_world(), tmp_path)
    victim = tmp_path / "frames" / "frame_0002.png"
    raw = bytearray(victim.read_bytes())
    raw[-20] ^= 0xFF
    victim.write_bytes(bytes(raw))
    with pytest.raises(ImageHashMismatch):
        load_manifest(tmp_path)


def test_newer_schema_rejected(tmp_path):
    save_manifest(build_world(), tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    doc["schema_version"] = SCHEMA_VERSION + 1
    (tmp_path / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionMismatch):
        load_manifest(tmp_path)


def test_repeated_save_is_byte_identical(tmp_path):
    w = build_world()
    save_manifest(w, tmp_path)
    first = (tmp_path / "manifest.json").read_bytes()
    save_manifest(w, tmp_path)
    assert (tmp_path / "manifest.json").read_bytes() == first


def test_incremental_save_preserves_existing_frames(tmp_path):
    w = build_world(n=2)
    save_manifest(w, tmp_path)
    frame1_bytes = (tmp_path / "frames" / "frame_0001.png").read_bytes()
    append_frame(w, make_frame(3))
    save_manifest(w, tmp_path)
    assert (tmp_path / "frames" / "frame_0001.png").read_bytes() == frame1_bytes
    assert len(load_manifest(tmp_path).frames) == 3
