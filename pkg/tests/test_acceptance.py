"""Acceptance suite: one test per criterion, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.
The oracle end-to-end criterion runs at the full default budgets and takes
the bulk of the wall-clock budget.
"""

import json
import math
import socket
import threading
import time

import numpy as np
import pytest

from worldloom.agents import gate, generate_candidate
from worldloom.cli import main
from worldloom.errors import TransportError
from worldloom.geometry import CameraPose, Direction, PerturbationBounds, next_pose, rot_y
from worldloom.imaging import area_resize, decode_png
from worldloom.manifest import load_manifest
from worldloom.metrics import masked_psnr, psnr, ssim
from worldloom.oracle import CorruptionKind, ScriptedVlm, corrupt, oracle_backends
from worldloom.orchestrator import Orchestrator, RunConfig, exit_code_for
from worldloom.protocol import BackendEndpoints, GeneratorClient, ImagePayload
from worldloom.world import Budgets, StopReason

from .conftest import RecordingReconstructor, SequenceVlm, build_oracle_world, small_settings, with_stubs
from .reference import loop_psnr, loop_ssim


def passed(name: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS")


# --- 1. oracle end-to-end ---------------------------------------------------------

def test_oracle_end_to_end(tmp_path):
    """run --oracle at stock defaults: 14 frames, FrameQuota, render-backs
    >= 25 dB on valid pixels, < 120 s wall-clock."""
    out = tmp_path / "scene"
    start = time.monotonic()
    code = main([
        "run", "--oracle", "--scene-seed", "0", "--seed", "7",
        "--prompt", "a sci-fi laboratory",
        "--out", str(out), "--budgets", "14,28,2",
    ])
    elapsed = time.monotonic() - start
    assert code == 0
    world = load_manifest(out)
    assert len(world.frames) == 14
    assert world.stopped is StopReason.FRAME_QUOTA

    renders = sorted(p for p in (out / "final_renders").glob("render_*.png")
                     if ".valid" not in p.name)
    masks = sorted((out / "final_renders").glob("render_*.valid.png"))
    assert len(renders) == 14
    for frame, render_path, mask_path in zip(world.frames, renders, masks):
        rendered = decode_png(render_path.read_bytes())
        valid = decode_png(mask_path.read_bytes())[:, :, 0] > 127
        reference = area_resize(frame.image, rendered.shape[0])
        score = masked_psnr(reference, rendered, valid)
        assert score >= 25.0, f"frame {frame.index}: render-back {score:.2f} dB"
    assert elapsed < 120.0, f"run took {elapsed:.1f}s"
    passed(f"oracle-end-to-end ({elapsed:.1f}s, 14 frames, all render-backs >= 25 dB)")


# --- 2. verifier discrimination ----------------------------------------------------

def test_verifier_discrimination():
    """50 trials each arm: clean accepted >= 95%, noise/replace rejected >= 90%;
    corruption severities first confirmed < 18 dB by the brute-force oracle."""
    world, backends = build_oracle_world(n_frames=3)
    settings = small_settings()
    trial_rng = np.random.default_rng(2024)

    def fresh_candidate(i):
        pose, _ = next_pose(
            world.frames[-1].pose, 20.0, Direction.RIGHT,
            np.random.default_rng(1000 + i), PerturbationBounds(),
        )
        return generate_candidate(
            world, pose, "next", backends.reconstructor, backends.generator,
            settings, try_number=4,
        )

    # the brute-force metric oracle confirms the corruption severities land
    # below 18 dB against the clean candidate
    probe = fresh_candidate(0)
    small = area_resize(probe.image, 64)
    noisy_small = corrupt(small, CorruptionKind.GAUSSIAN_NOISE, 0.2, np.random.default_rng(1))
    replaced_small = corrupt(small, CorruptionKind.CONTENT_REPLACE, 0.5, np.random.default_rng(2))
    assert loop_psnr(small, noisy_small) < 18.0
    assert loop_psnr(small, replaced_small) < 18.0

    n = 50
    clean_accepts = noise_rejects = replace_rejects = 0
    for i in range(n):
        candidate = fresh_candidate(i)
        if gate(candidate, world, backends, settings).final:
            clean_accepts += 1

        noisy = fresh_candidate(i)
        noisy.image = corrupt(noisy.image, CorruptionKind.GAUSSIAN_NOISE, 0.2, trial_rng)
        if not gate(noisy, world, backends, settings).final:
            noise_rejects += 1

        replaced = fresh_candidate(i)
        replaced.image = corrupt(replaced.image, CorruptionKind.CONTENT_REPLACE, 0.5, trial_rng)
        if not gate(replaced, world, backends, settings).final:
            replace_rejects += 1

    assert clean_accepts >= math.ceil(0.95 * n), f"clean accepts {clean_accepts}/{n}"
    assert noise_rejects >= math.ceil(0.90 * n), f"noise rejects {noise_rejects}/{n}"
    assert replace_rejects >= math.ceil(0.90 * n), f"replace rejects {replace_rejects}/{n}"
    passed(
        f"verifier-discrimination (clean {clean_accepts}/{n} accepted, noise "
        f"{noise_rejects}/{n} rejected, replace {replace_rejects}/{n} rejected)"
    )


# --- 3. metric oracles ---------------------------------------------------------------

def test_metric_oracles():
    """PSNR/SSIM match double-loop references within 1e-9 on 20 random pairs;
    the 1/255-uniform-offset pair yields 48.1308 dB within 1e-3."""
    rng = np.random.default_rng(99)
    for i in range(20):
        a = rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)
        b = rng.integers(0, 256, (24, 24, 3), dtype=np.uint8)
        assert abs(psnr(a, b) - loop_psnr(a, b)) < 1e-9
        assert abs(ssim(a, b, window=7) - loop_ssim(a, b, window=7)) < 1e-9

    base = np.full((32, 32, 3), 100, dtype=np.uint8)
    offset = base + 1
    assert abs(psnr(base, offset) - 48.1308) < 1e-3
    passed("metric-oracles (20 pairs within 1e-9, offset pair 48.1308 within 1e-3)")


# --- 4. budget semantics --------------------------------------------------------------

def test_budget_semantics(tmp_path):
    """Always-reject: exactly 28 tries, exit code 2, director re-consulted
    after every 2 consecutive rejections, direction flips at tries_used=14."""
    config = RunConfig(
        global_prompt="budget probe",
        out_dir=tmp_path / "budget",
        budgets=Budgets(14, 28, 2),
        working_resolution=224,
        recon_resolution=196,
        seed=5,
        oracle_scene_seed=0,
    )
    vlm = ScriptedVlm(script={"verify_2d": ["DECISION: REJECT\nREASON: scripted"] * 64})
    backends = oracle_backends(0, config.oracle_config(), vlm=vlm)
    _, report = Orchestrator(config, backends).run()

    assert report.tries_used == 28
    assert report.stop_reason == StopReason.TRY_BUDGET.value
    assert exit_code_for(report) == 2
    assert report.accepted_count == 1  # the ungated bootstrap

    consults = {e["try_at"] + 1 for e in report.events if e["kind"] == "director"}
    rejected_tries = [e["try"] for e in report.events
                      if e["kind"] == "try" and e["verdict"] == "rejected"]
    assert rejected_tries == list(range(2, 29))
    # after every 2 consecutive rejections of a plan, the next try (if any)
    # is preceded by a fresh director consultation
    plan_streak = 0
    for t in rejected_tries:
        if t in consults:
            plan_streak = 0
        plan_streak += 1
        assert plan_streak <= 2, f"try {t} ran on a plan already rejected twice"

    directions = {e["try"]: e["direction"] for e in report.events if e["kind"] == "try"}
    assert directions[14] == "right"  # tries_used was 13 at step start
    assert directions[15] == "left"  # tries_used hit 14: the sweep flips
    assert all(d == "right" for t, d in directions.items() if t <= 14)
    assert all(d == "left" for t, d in directions.items() if t >= 15)
    passed("budget-semantics (28 tries, exit 2, consult cadence, flip at 14)")


# --- 5. pose algebra -------------------------------------------------------------------

def test_pose_algebra(tmp_path):
    """100-step yaw chains match the closed form within 1e-9; seeded runs are
    bit-identical across two executions."""
    pose = CameraPose.identity()
    rng = np.random.default_rng(0)
    for _ in range(100):
        pose, _ = next_pose(pose, 13.0, Direction.RIGHT, rng, PerturbationBounds.zero())
    c, s = math.cos(math.radians(-1300.0)), math.sin(math.radians(-1300.0))
    closed = np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1]])
    assert np.max(np.abs(pose.matrix - closed)) < 1e-9

    outs = []
    for name in ("a", "b"):
        config = RunConfig(
            global_prompt="determinism probe",
            out_dir=tmp_path / name,
            budgets=Budgets(4, 8, 2),
            working_resolution=224,
            recon_resolution=196,
            seed=21,
            oracle_scene_seed=0,
        )
        Orchestrator(config).run()
        outs.append(config.out_dir)
    assert (outs[0] / "manifest.json").read_bytes() == (outs[1] / "manifest.json").read_bytes()
    for pa in sorted((outs[0] / "frames").glob("*.png")):
        pb = outs[1] / "frames" / pa.name
        assert pa.read_bytes() == pb.read_bytes()
    passed("pose-algebra (100-step chain within 1e-9, bit-identical manifests)")


# --- 6. gate conjunction -----------------------------------------------------------------

def test_gate_conjunction():
    """final == v2d AND v3d over all four combinations (forced evaluation);
    a 2D rejection issues zero reconstructor calls."""
    world, backends = build_oracle_world(n_frames=2)
    settings = small_settings()
    pose = CameraPose(rot_y(-40.0))
    candidate = generate_candidate(
        world, pose, "p", backends.reconstructor, backends.generator, settings, 3
    )
    acc, rej = "DECISION: ACCEPT", "DECISION: REJECT"
    for reply_2d, reply_3d in ((acc, acc), (acc, rej), (rej, acc), (rej, rej)):
        vlm = SequenceVlm({"verify_2d": [reply_2d], "verify_3d": [reply_3d]})
        verdict = gate(candidate, world, with_stubs(backends, vlm=vlm), settings, force_both=True)
        assert verdict.final == (reply_2d == acc and reply_3d == acc)
        assert verdict.v2d.accepted == (reply_2d == acc)
        assert verdict.v3d.accepted == (reply_3d == acc)

    recorder = RecordingReconstructor(inner=backends.reconstructor)
    vlm = SequenceVlm({"verify_2d": [rej]})
    verdict = gate(candidate, world, with_stubs(backends, vlm=vlm, reconstructor=recorder), settings)
    assert not verdict.final and verdict.v3d is None
    assert recorder.calls == 0
    passed("gate-conjunction (4 combinations, zero reconstructor calls on 2D reject)")


# --- 7. durability ---------------------------------------------------------------------

class InjectedKill(Exception):
    pass


def test_durability(tmp_path):
    """Killing the run after frame k leaves a loadable manifest with exactly
    k frames, for k in {1, 5, 10}."""
    for k in (1, 5, 10):
        config = RunConfig(
            global_prompt="durability probe",
            out_dir=tmp_path / f"kill{k}",
            budgets=Budgets(14, 28, 2),
            working_resolution=224,
            recon_resolution=196,
            seed=3,
            oracle_scene_seed=0,
        )
        orch = Orchestrator(config)

        def kill_after(count, k=k):
            if count >= k:
                raise InjectedKill(str(k))

        orch.after_accept = kill_after
        with pytest.raises(InjectedKill):
            orch.run()
        world = load_manifest(config.out_dir)
        assert len(world.frames) == k, f"kill point {k}: {len(world.frames)} frames survive"
    passed("durability (kill points 1, 5, 10 all preserve exactly k frames)")


# --- 8. wire protocol -------------------------------------------------------------------

def test_wire_protocol():
    """ImagePayload round-trips bit-exactly including masks; a permanently
    failing loopback backend produces exactly 1 + retries requests."""
    rng = np.random.default_rng(7)
    img = rng.integers(0, 256, (96, 96, 3), dtype=np.uint8)
    mask = rng.random((96, 96)) > 0.37
    doc = json.loads(json.dumps(ImagePayload.from_image(img, mask).to_json()))
    back = ImagePayload.from_json(doc)
    assert np.array_equal(back.image(), img)
    assert np.array_equal(back.mask(), mask)

    # loopback that accepts connections, then resets them without replying
    connections = []
    listener = socket.socket()
    listener.bind(("127.0.0.1", 0))
    listener.listen()
    port = listener.getsockname()[1]
    running = True

    def slam():
        while running:
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            connections.append(1)
            conn.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, b"\x01\x00\x00\x00\x00\x00\x00\x00")
            conn.close()

    thread = threading.Thread(target=slam, daemon=True)
    thread.start()
    try:
        eps = BackendEndpoints(
            generator_url=f"http://127.0.0.1:{port}",
            vlm_url=f"http://127.0.0.1:{port}",
            reconstructor_url=f"http://127.0.0.1:{port}",
            max_transport_retries=3,
            backoff_base_secs=0.0,
        )
        with pytest.raises(TransportError):
            GeneratorClient(eps, 32).txt2img("x")
    finally:
        running = False
        listener.close()
        thread.join(timeout=5)
    assert len(connections) == 1 + 3, f"saw {len(connections)} connection attempts"
    passed("wire-protocol (bit-exact payload round-trip, 1+retries connections)")
