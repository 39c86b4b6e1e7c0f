import logging
import math

import numpy as np
import pytest

from worldloom.errors import DimensionMismatch, EmptyInput, ImageTooSmall, LpipsUnavailable
from worldloom.metrics import (
    format_metric_table,
    frame_profile,
    gaussian_kernel,
    global_profile,
    masked_psnr,
    mse,
    parse_metric_summary,
    psnr,
    ssim,
)

from .reference import loop_mse, loop_psnr, loop_ssim


def rand_pair(seed, size=24, channels=3):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, size=(size, size, channels), dtype=np.uint8)
    b = rng.integers(0, 256, size=(size, size, channels), dtype=np.uint8)
    return a, b


class StubLpips:
    def __init__(self, value=0.0):
        self.value = value

    def lpips(self, a, b):
        return self.value


class DeadLpips:
    def lpips(self, a, b):
        raise LpipsUnavailable("backend timed out")


# --- mse -------------------------------------------------------------------

def test_mse_identical_is_zero():
    a, _ = rand_pair(0)
    assert mse(a, a) == 0.0


def test_mse_full_scale_difference():
    black = np.zeros((8, 8, 3), dtype=np.uint8)
    white = np.full((8, 8, 3), 255, dtype=np.uint8)
    assert mse(black, white) == pytest.approx(1.0)


def test_mse_matches_double_loop_oracle():
    a, b = rand_pair(1, size=16)
    assert mse(a, b) == pytest.approx(loop_mse(a, b), abs=1e-12)


def test_mse_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        mse(np.zeros((4, 4, 3)), np.zeros((5, 5, 3)))


# --- psnr ------------------------------------------------------------------

def test_psnr_identical_hits_cap():
    a, _ = rand_pair(2)
    assert psnr(a, a) == 100.0


def test_psnr_one_level_offset_closed_form():
    a = np.full((32, 32, 3), 100, dtype=np.uint8)
    b = np.full((32, 32, 3), 101, dtype=np.uint8)
    expected = 20.0 * math.log10(255.0)  # mse is exactly (1/255)^2
    assert psnr(a, b) == pytest.approx(expected, abs=1e-9)
    assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)


def test_psnr_symmetry():
    for seed in range(5):
        a, b = rand_pair(seed)
        assert psnr(a, b) == psnr(b, a)


def test_psnr_tracks_mse_relation():
    for seed in range(10):
        a, b = rand_pair(seed)
        err = mse(a, b)
        if err >= 1e-10:
            assert abs(psnr(a, b) - 10.0 * math.log10(1.0 / err)) < 1e-9


def test_psnr_matches_loop_oracle_on_random_pairs():
    for seed in range(20):
        a, b = rand_pair(seed, size=12)
        assert psnr(a, b) == pytest.approx(loop_psnr(a, b), abs=1e-9)


# --- ssim ------------------------------------------------------------------

def test_ssim_identical_is_one():
    a, _ = rand_pair(3, size=16)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)


def test_ssim_anticorrelated_binary_is_negative():
    rng = np.random.default_rng(4)
    a = (rng.integers(0, 2, size=(32, 32)) * 255).astype(np.uint8)
    b = (255 - a).astype(np.uint8)
    assert ssim(a, b) < 0.0


def test_ssim_toy_images_match_windowed_oracle():
    rng = np.random.default_rng(5)
    a = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    b = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    mine = ssim(a, b, window=5)
    theirs = loop_ssim(a, b, window=5)
    assert mine == pytest.approx(theirs, abs=1e-9)


def test_ssim_matches_oracle_on_random_pairs():
    for seed in range(20):
        a, b = rand_pair(seed + 100, size=16)
        assert ssim(a, b, window=7) == pytest.approx(loop_ssim(a, b, window=7), abs=1e-9)


def test_ssim_bounded_on_fuzzed_inputs():
    rng = np.random.default_rng(6)
    for _ in range(30):
        a = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        b = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        v = ssim(a, b)
        assert -1.0 <= v <= 1.0 + 1e-9


def test_ssim_too_small():
    with pytest.raises(ImageTooSmall):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), window=11)


def test_gaussian_kernel_normalized():
    g = gaussian_kernel(11, 1.5)
    assert g.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.argmax(g) == 5


def test_shift_decreases_both_metrics():
    # textured image: smooth multi-frequency pattern
    x = np.linspace(0, 6 * np.pi, 64)
    base = (np.sin(x)[None, :] + np.cos(x * 1.7)[:, None]) * 0.25 + 0.5
    img = (np.stack([base, base * 0.8, base * 0.6], axis=-1) * 255).astype(np.uint8)
    shifted = np.roll(img, 4, axis=1)
    assert psnr(img, shifted) < psnr(img, img)
    assert ssim(img, shifted) < ssim(img, img)


# --- frame_profile / global_profile -----------------------------------------

def test_frame_profile_no_backend():
    a, _ = rand_pair(7, size=16)
    t = frame_profile(a, a)
    assert t.psnr == 100.0
    assert t.ssim == pytest.approx(1.0, abs=1e-9)
    assert t.lpips is None


def test_frame_profile_stub_backend():
    a, _ = rand_pair(8, size=16)
    t = frame_profile(a, a, StubLpips(0.0))
    assert t.lpips == 0.0


def test_frame_profile_backend_failure_is_non_fatal(caplog):
    a, _ = rand_pair(9, size=16)
    with caplog.at_level(logging.WARNING, logger="worldloom.metrics"):
        t = frame_profile(a, a, DeadLpips())
    assert t.lpips is None
    assert any("lpips" in rec.message for rec in caplog.records)


def test_frame_profile_hanging_lpips_backend_times_out(caplog):
    # a real HTTP backend that hangs: the client times out, the profile
    # records the metric as absent instead of failing
    import threading
    from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
    import time as _time

    from worldloom.protocol import BackendEndpoints, LpipsClient

    class Hang(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def do_POST(self):
            _time.sleep(3.0)

    httpd = ThreadingHTTPServer(("127.0.0.1", 0), Hang)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        eps = BackendEndpoints(
            lpips_url=f"http://127.0.0.1:{httpd.server_address[1]}",
            timeout=0.2,
            max_transport_retries=0,
            backoff_base_secs=0.0,
        )
        a, _ = rand_pair(13, size=16)
        with caplog.at_level(logging.WARNING, logger="worldloom.metrics"):
            t = frame_profile(a, a, LpipsClient(eps))
        assert t.lpips is None
        assert t.psnr == 100.0
    finally:
        httpd.shutdown()
        httpd.server_close()


def test_global_profile_identical_pairs():
    a, _ = rand_pair(10, size=16)
    prof = global_profile([(a, a), (a, a), (a, a)])
    assert prof.summary.min_psnr == 100.0
    assert prof.summary.mean_psnr == 100.0
    assert prof.summary.min_lpips is None


def test_global_profile_corrupted_pair_drags_min_below_mean():
    a, b = rand_pair(11, size=16)
    prof = global_profile([(a, a), (a, b), (a, a)])
    assert prof.summary.min_psnr < prof.summary.mean_psnr


def test_global_profile_summary_matches_independent_fold():
    pairs = [rand_pair(s, size=16) for s in range(4)]
    prof = global_profile(pairs)
    psnrs = [psnr(a, b) for a, b in pairs]
    ssims = [ssim(a, b) for a, b in pairs]
    assert prof.summary.min_psnr == min(psnrs)
    assert prof.summary.mean_psnr == sum(psnrs) / 4
    assert prof.summary.min_ssim == min(ssims)
    assert prof.summary.mean_ssim == sum(ssims) / 4


def test_global_profile_rejects_empty():
    with pytest.raises(EmptyInput):
        global_profile([])


def test_metric_table_roundtrip():
    a, b = rand_pair(12, size=16)
    prof = global_profile([(a, a), (a, b)])
    table = format_metric_table(prof)
    summary = parse_metric_summary(table)
    assert summary["min_psnr"] == pytest.approx(prof.summary.min_psnr, abs=1e-3)
    assert summary["min_ssim"] == pytest.approx(prof.summary.min_ssim, abs=1e-3)
    assert summary["min_lpips"] is None


def test_masked_psnr_restricts_to_mask():
    a = np.zeros((16, 16, 3), dtype=np.uint8)
    b = a.copy()
    b[:8] = 255  # corrupt the top half
    mask = np.zeros((16, 16), dtype=bool)
    mask[8:] = True
    assert masked_psnr(a, b, mask) == 100.0
    assert psnr(a, b) < 10.0
