"""Flat buffer-oriented boundary around one tracker instance.

Everything crossing this boundary is a plain number or a byte buffer, so a
host (a browser page, a foreign runtime, an RPC bridge) can drive the tracker
without sharing any structured types. docs/embed_abi.md is the normative
reference. The boundary is single-threaded per handle.

Status codes returned by embed_process:
  0   frame processed, no pose
  1   pose found by the detection phase
  2   pose found by the tracking phase
  -1  invalid (or disposed) handle
  -2  frame buffer/dimension mismatch
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import CameraIntrinsics, GrayImage, to_gray
from .errors import ConfigError, InvalidInputError, TooFewFeaturesError, TrackError
from .pipeline import Phase, Tracker, TrackerConfig, build_template, parse_config

ERR_NONE = 0
ERR_BAD_DIMENSIONS = 1
ERR_TOO_FEW_FEATURES = 2
ERR_CONFIG_PARSE = 3

_handles: dict[int, Tracker] = {}
_next_handle = 1
_last_error = ERR_NONE


@dataclass(frozen=True)
class EmbedResult:
    """Flat result record: status code, 4x4 row-major camera-from-target
    matrix (meters), 3x3 row-major homography, and total frame time (us).
    Matrix slots are zeros whenever status <= 0."""

    status: int
    pose_matrix: tuple
    homography: tuple
    total_time_us: int


_ZERO16 = tuple([0.0] * 16)
_ZERO9 = tuple([0.0] * 9)


def embed_last_error() -> int:
    """Error code of the most recent failed embed_init (0 when none)."""
    return _last_error


def embed_init(template_pixels, tw: int, th: int,
               physical_w: float, physical_h: float,
               fx: float, fy: float, cx: float, cy: float,
               config_text=b"") -> int:
    """Allocate a tracker for an 8-bit gray template buffer.

    Returns a nonzero opaque handle, or 0 with a code retrievable through
    embed_last_error(): 1 bad dimensions, 2 too few template features,
    3 config parse error.
    """
    global _next_handle, _last_error
    _last_error = ERR_NONE

    text = config_text.decode("utf-8") if isinstance(config_text, (bytes, bytearray)) \
        else str(config_text)
    try:
        config = parse_config(text) if text.strip() else TrackerConfig()
    except ConfigError:
        _last_error = ERR_CONFIG_PARSE
        return 0

    try:
        if tw < 1 or th < 1 or physical_w <= 0 or physical_h <= 0:
            raise InvalidInputError("bad template dimensions")
        image = GrayImage.from_bytes(template_pixels, tw, th)
    except (InvalidInputError, TypeError):
        _last_error = ERR_BAD_DIMENSIONS
        return 0

    try:
        template = build_template(image, physical_w, physical_h, config.features)
        tracker = Tracker(template, CameraIntrinsics(fx, fy, cx, cy), config)
    except TooFewFeaturesError:
        _last_error = ERR_TOO_FEW_FEATURES
        return 0
    except InvalidInputError:
        _last_error = ERR_BAD_DIMENSIONS
        return 0

    handle = _next_handle
    _next_handle += 1
    _handles[handle] = tracker
    return handle


def embed_process(handle: int, frame_pixels, fw: int, fh: int,
                  rgba: bool = True) -> EmbedResult:
    """Process one camera frame through the tracker behind `handle`.

    frame_pixels is RGBA (fw*fh*4 bytes) when rgba is true, otherwise 8-bit
    gray (fw*fh bytes). Algorithmic failures are status 0; contract
    violations are status -1 (handle) and -2 (dimensions).
    """
    tracker = _handles.get(handle)
    if tracker is None:
        return EmbedResult(status=-1, pose_matrix=_ZERO16, homography=_ZERO9,
                           total_time_us=0)
    t0 = time.perf_counter_ns()
    try:
        frame = to_gray(frame_pixels, fw, fh) if rgba \
            else GrayImage.from_bytes(frame_pixels, fw, fh)
        result = tracker.process_frame(frame)
    except (InvalidInputError, TypeError):
        return EmbedResult(status=-2, pose_matrix=_ZERO16, homography=_ZERO9,
                           total_time_us=0)
    except TrackError:
        return EmbedResult(status=0, pose_matrix=_ZERO16, homography=_ZERO9,
                           total_time_us=(time.perf_counter_ns() - t0) // 1000)

    total_us = (time.perf_counter_ns() - t0) // 1000
    if result.pose is None:
        return EmbedResult(status=0, pose_matrix=_ZERO16, homography=_ZERO9,
                           total_time_us=total_us)
    status = 1 if result.phase_executed is Phase.DETECTING else 2
    return EmbedResult(status=status,
                       pose_matrix=tuple(result.pose.matrix4().reshape(-1)),
                       homography=tuple(result.homography.h.reshape(-1)),
                       total_time_us=total_us)


def embed_dispose(handle: int) -> None:
    """Release a handle. Double dispose is a harmless no-op."""
    _handles.pop(handle, None)
