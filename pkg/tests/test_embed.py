import numpy as np
import pytest

import nftrack.embed as embed
from nftrack.core import GrayImage
from nftrack.harness import (
    A4_HEIGHT_M,
    A4_WIDTH_M,
    DEFAULT_INTRINSICS,
    TrajectorySpec,
    render_sequence,
)
from nftrack.pipeline import Phase, Tracker, TrackerConfig


K = DEFAULT_INTRINSICS


def init_default(target, config_text=b""):
    img = target.image
    return embed.embed_init(img.pixels.tobytes(), img.width, img.height,
                            A4_WIDTH_M, A4_HEIGHT_M,
                            K.fx, K.fy, K.cx, K.cy, config_text)


def gray_to_rgba(frame: GrayImage) -> bytes:
    px = frame.pixels.reshape(-1, 1)
    rgba = np.repeat(px, 4, axis=1)
    rgba[:, 3] = 255
    return rgba.tobytes()


@pytest.fixture
def handle(default_target):
    h = init_default(default_target)
    assert h != 0
    yield h
    embed.embed_dispose(h)


class TestEmbedInit:
    def test_valid_template_returns_nonzero(self, default_target):
        h = init_default(default_target)
        assert h != 0
        assert embed.embed_last_error() == embed.ERR_NONE
        embed.embed_dispose(h)

    def test_dimension_mismatch_code_1(self, default_target):
        img = default_target.image
        h = embed.embed_init(img.pixels.tobytes(), img.width + 1, img.height,
                             A4_WIDTH_M, A4_HEIGHT_M, K.fx, K.fy, K.cx, K.cy)
        assert h == 0
        assert embed.embed_last_error() == embed.ERR_BAD_DIMENSIONS

    def test_constant_template_code_2(self):
        buf = bytes([128]) * (64 * 64)
        h = embed.embed_init(buf, 64, 64, A4_WIDTH_M, A4_HEIGHT_M,
                             K.fx, K.fy, K.cx, K.cy)
        assert h == 0
        assert embed.embed_last_error() == embed.ERR_TOO_FEW_FEATURES

    def test_config_parse_error_code_3(self, default_target):
        h = init_default(default_target, b"not a config at all")
        assert h == 0
        assert embed.embed_last_error() == embed.ERR_CONFIG_PARSE

    def test_config_text_applies(self, default_target):
        h = init_default(default_target, b"features.fast_threshold=25\nseed=2\n")
        assert h != 0
        embed.embed_dispose(h)


class TestEmbedProcess:
    def test_black_frame_gives_status_zero(self, handle):
        buf = bytes(320 * 240)
        r = embed.embed_process(handle, buf, 320, 240, rgba=False)
        assert r.status == 0
        assert r.pose_matrix == tuple([0.0] * 16)
        assert r.homography == tuple([0.0] * 9)

    def test_detection_then_tracking_statuses(self, handle, default_target):
        spec = TrajectorySpec(frames=3, elevation_start=88, elevation_end=87,
                              azimuth_start=4, azimuth_end=6, noise_sigma=2.0, seed=3)
        seq = render_sequence(default_target, spec)
        r0 = embed.embed_process(handle, seq.frames[0].pixels.tobytes(),
                                 320, 240, rgba=False)
        assert r0.status == 1
        m = np.array(r0.pose_matrix).reshape(4, 4)
        assert np.array_equal(m[3], [0, 0, 0, 1])
        r1 = embed.embed_process(handle, seq.frames[1].pixels.tobytes(),
                                 320, 240, rgba=False)
        assert r1.status == 2

    def test_rgba_frames_accepted(self, handle, default_target):
        spec = TrajectorySpec(frames=1, seed=3)
        seq = render_sequence(default_target, spec)
        r = embed.embed_process(handle, gray_to_rgba(seq.frames[0]), 320, 240,
                                rgba=True)
        assert r.status == 1

    def test_invalid_handle_minus_one(self):
        r = embed.embed_process(987654321, bytes(320 * 240), 320, 240, rgba=False)
        assert r.status == -1

    def test_dimension_mismatch_minus_two(self, handle):
        r = embed.embed_process(handle, bytes(100), 320, 240, rgba=False)
        assert r.status == -2

    def test_frame_size_change_minus_two(self, handle, default_target):
        spec = TrajectorySpec(frames=1, seed=3)
        seq = render_sequence(default_target, spec)
        embed.embed_process(handle, seq.frames[0].pixels.tobytes(), 320, 240,
                            rgba=False)
        r = embed.embed_process(handle, bytes(160 * 120), 160, 120, rgba=False)
        assert r.status == -2


class TestEmbedDispose:
    def test_dispose_invalidates_handle(self, default_target):
        h = init_default(default_target)
        embed.embed_dispose(h)
        r = embed.embed_process(h, bytes(320 * 240), 320, 240, rgba=False)
        assert r.status == -1

    def test_double_dispose_is_noop(self, default_target):
        h = init_default(default_target)
        embed.embed_dispose(h)
        embed.embed_dispose(h)  # must not raise

    def test_independent_handles(self, default_target):
        h1 = init_default(default_target)
        h2 = init_default(default_target)
        assert h1 != h2
        spec = TrajectorySpec(frames=4, elevation_start=88, elevation_end=86,
                              azimuth_start=4, azimuth_end=8, noise_sigma=2.0, seed=3)
        seq = render_sequence(default_target, spec)
        frames = [f.pixels.tobytes() for f in seq.frames]

        # run h1 alone for reference
        ref = [embed.embed_process(h1, f, 320, 240, rgba=False) for f in frames]
        embed.embed_dispose(h1)

        # interleave a second handle with black frames; h2's outputs must
        # equal the reference run exactly
        h3 = init_default(default_target)
        black = bytes(320 * 240)
        got = []
        for f in frames:
            got.append(embed.embed_process(h2, f, 320, 240, rgba=False))
            embed.embed_process(h3, black, 320, 240, rgba=False)
        embed.embed_dispose(h2)
        embed.embed_dispose(h3)

        for a, b in zip(ref, got):
            assert a.status == b.status
            assert a.pose_matrix == b.pose_matrix
            assert a.homography == b.homography


class TestBoundaryEquivalence:
    def test_matches_direct_pipeline(self, default_target):
        spec = TrajectorySpec(frames=12, elevation_start=90, elevation_end=86,
                              azimuth_start=0, azimuth_end=10, noise_sigma=2.0,
                              blackout=(5, 7), seed=6)
        seq = render_sequence(default_target, spec)

        handle = init_default(default_target)
        tracker = Tracker(default_target, K, TrackerConfig())
        try:
            for frame in seq.frames:
                r = embed.embed_process(handle, frame.pixels.tobytes(), 320, 240,
                                        rgba=False)
                direct = tracker.process_frame(frame)
                if direct.pose is None:
                    assert r.status == 0
                else:
                    expected = 1 if direct.phase_executed is Phase.DETECTING else 2
                    assert r.status == expected
                    m = np.array(r.pose_matrix).reshape(4, 4)
                    assert np.max(np.abs(m[:3, :3] - direct.pose.r)) < 1e-9
                    assert np.max(np.abs(m[:3, 3] - direct.pose.t)) < 1e-9
                    h = np.array(r.homography).reshape(3, 3)
                    assert np.max(np.abs(h - direct.homography.h)) < 1e-9
        finally:
            embed.embed_dispose(handle)
