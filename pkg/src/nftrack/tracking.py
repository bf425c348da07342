"""Steady-state patch tracking: warp the template by the previous homography,
downsample, match 5x5 patches by NCC inside a 16px search window, re-estimate
the homography and pose, and gate the pose by the translation threshold."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .core import CameraIntrinsics, GrayImage, Homography, Pose, TargetTemplate, bilinear_sample
from .errors import (
    DegenerateGeometryError,
    EstimationFailedError,
    InvalidInputError,
    PoseFailedError,
    SingularProjectionError,
    TooFewPointsError,
    TrackingLostError,
)
from .geometry import (
    PnpParams,
    RansacParams,
    homography_dlt,
    pose_from_homography,
    ransac_homography,
    transform_points,
)

PATCH_SIZE = 5
PATCH_HALF = PATCH_SIZE // 2
TRACK_CAP = 25  # hard upper bound on simultaneously tracked patches


@dataclass(frozen=True)
class TrackedPoint:
    """One tracked correspondence between the template plane and the frame."""

    template_point: tuple[float, float]
    last_frame_point: tuple[float, float]
    patch: np.ndarray  # 5x5 uint8, cut from the downsampled warped template
    alive: bool = True

    def __post_init__(self):
        p = np.asarray(self.patch, dtype=np.uint8)
        if p.shape != (PATCH_SIZE, PATCH_SIZE):
            raise InvalidInputError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}")
        p = np.ascontiguousarray(p)
        p.setflags(write=False)
        object.__setattr__(self, "patch", p)
        object.__setattr__(self, "template_point", tuple(map(float, self.template_point)))
        object.__setattr__(self, "last_frame_point", tuple(map(float, self.last_frame_point)))


@dataclass(frozen=True)
class ValidityParams:
    """Pose validity gate. The default translation ratio reproduces the 5 cm
    threshold on a DIN A4 (29.7 cm) target; rotation gating is off by default."""

    translation_ratio: float = 5.0 / 29.7
    min_tracked_points: int = 8
    rotation_threshold_deg: float = 0.0  # 0 disables the rotation gate

    def __post_init__(self):
        if self.translation_ratio <= 0:
            raise InvalidInputError("translation_ratio must be positive")
        if self.min_tracked_points < 4:
            raise InvalidInputError("min_tracked_points must be >= 4")


@dataclass(frozen=True)
class TrackParams:
    """NCC search parameters.

    search_window is the side length of the full offset window (offsets
    -w/2 .. w/2-1); set search_radius > 0 instead for symmetric offsets
    -r .. +r. match_resolution selects whether patches are matched on the
    half-resolution images (default) or at full resolution.
    """

    cap: int = TRACK_CAP
    ncc_accept: float = 0.7
    search_window: int = 16
    search_radius: int = 0
    match_resolution: str = "half"
    # robust re-estimation: NCC on self-similar texture occasionally locks
    # onto a neighbouring structure, and one 10px outlier among <=25 points
    # wrecks a plain least-squares fit
    use_ransac: bool = True

    def __post_init__(self):
        if not (1 <= self.cap <= TRACK_CAP):
            raise InvalidInputError(f"cap must lie in [1, {TRACK_CAP}]")
        if not (-1.0 <= self.ncc_accept <= 1.0):
            raise InvalidInputError("ncc_accept must lie in [-1, 1]")
        if self.search_window < 2 and self.search_radius < 1:
            raise InvalidInputError("search window too small")
        if self.match_resolution not in ("half", "full"):
            raise InvalidInputError("match_resolution must be 'half' or 'full'")

    def offsets(self) -> tuple[int, int]:
        """(lo, hi) inclusive offset bounds per axis."""
        if self.search_radius > 0:
            return -self.search_radius, self.search_radius
        half = self.search_window // 2
        return -half, self.search_window - half - 1


def warp_template(template: GrayImage, h: Homography, out_size) -> GrayImage:
    """Inverse-mapping warp of the template under h into an out_size canvas.

    out_size is (width, height). Every output pixel samples the template at
    H^-1 p with bilinear interpolation; out-of-bounds samples produce 0.
    """
    w, h_out = int(out_size[0]), int(out_size[1])
    if w < 1 or h_out < 1:
        raise InvalidInputError("output size must be positive")
    hinv = h.inverse().h
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h_out, dtype=np.float64))
    denom = hinv[2, 0] * gx + hinv[2, 1] * gy + hinv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (hinv[0, 0] * gx + hinv[0, 1] * gy + hinv[0, 2]) / denom
        sy = (hinv[1, 0] * gx + hinv[1, 1] * gy + hinv[1, 2]) / denom
    bad = np.abs(denom) < 1e-12
    sx[bad] = -1.0
    sy[bad] = -1.0
    vals, _ = bilinear_sample(template.pixels, sx, sy)
    return GrayImage(np.floor(vals + 0.5).astype(np.uint8))


def downsample2(image: GrayImage) -> GrayImage:
    """Halve resolution: each output pixel is the rounded (half up) mean of a
    2x2 block; a trailing odd row/column is dropped."""
    if image.width < 2 or image.height < 2:
        raise InvalidInputError("downsample2 needs at least a 2x2 image")
    p = image.pixels
    h2, w2 = p.shape[0] // 2, p.shape[1] // 2
    p = p[:h2 * 2, :w2 * 2].astype(np.uint16)
    s = p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2]
    return GrayImage(((s + 2) // 4).astype(np.uint8))


def select_tracking_points(keypoints, inlier_mask, cap: int = TRACK_CAP,
                           min_points: int = 8) -> list[int]:
    """Indices of the inlier keypoints to track: response descending, ties by
    index ascending, truncated to cap. Raises TooFewPointsError below
    min_points inliers (forces re-detection)."""
    if len(keypoints) != len(inlier_mask):
        raise InvalidInputError("inlier mask must be parallel to keypoints")
    idx = [i for i, m in enumerate(inlier_mask) if m]
    if len(idx) < min_points:
        raise TooFewPointsError(f"{len(idx)} inliers, need >= {min_points}")
    idx.sort(key=lambda i: (-keypoints[i].response, i))
    return idx[:cap]


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def full_to_downsampled(point, scale: float):
    """Map a full-resolution coordinate into the downsampled image.

    A downsampled pixel j covers full-resolution pixels scale*j .. scale*j +
    scale-1, so its center sits at scale*j + (scale-1)/2.
    """
    off = (scale - 1.0) / 2.0
    return ((point[0] - off) / scale, (point[1] - off) / scale)


def downsampled_to_full(point, scale: float):
    off = (scale - 1.0) / 2.0
    return (point[0] * scale + off, point[1] * scale + off)


def extract_patch(image: GrayImage, center, size: int = PATCH_SIZE):
    """size x size patch centered at round(center), or None when the window
    leaves the image (the point is dropped, not an error)."""
    if size != PATCH_SIZE:
        raise InvalidInputError(f"patch size is fixed at {PATCH_SIZE}")
    cx = _round_half_up(float(center[0]))
    cy = _round_half_up(float(center[1]))
    if (cx - PATCH_HALF < 0 or cy - PATCH_HALF < 0
            or cx + PATCH_HALF >= image.width or cy + PATCH_HALF >= image.height):
        return None
    return image.pixels[cy - PATCH_HALF:cy + PATCH_HALF + 1,
                        cx - PATCH_HALF:cx + PATCH_HALF + 1].copy()


def ncc(patch, window) -> float:
    """Zero-mean normalized cross-correlation in [-1, 1]; zero variance on
    either side scores 0."""
    a = np.asarray(patch, dtype=np.float64).reshape(-1)
    b = np.asarray(window, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise InvalidInputError("patch and window must have equal size")
    a = a - a.mean()
    b = b - b.mean()
    na = np.sqrt((a * a).sum())
    nb = np.sqrt((b * b).sum())
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float((a * b).sum() / (na * nb))


_OFFSET_ORDER_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _offset_order(lo: int, hi: int) -> np.ndarray:
    """Offsets (dy, dx) sorted by (magnitude, row-major) for tie-breaking."""
    key = (lo, hi)
    if key not in _OFFSET_ORDER_CACHE:
        offs = [(dy, dx) for dy in range(lo, hi + 1) for dx in range(lo, hi + 1)]
        offs.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))
        _OFFSET_ORDER_CACHE[key] = np.array(offs, dtype=np.int64)
    return _OFFSET_ORDER_CACHE[key]


def ncc_search(frame: GrayImage, patch, center, params: TrackParams = TrackParams()):
    """Exhaustive integer-offset NCC search around round(center).

    Scores every offset in the search window whose 5x5 sample window lies
    inside the frame; returns ((x, y), score) for the best offset, with ties
    broken by smallest offset magnitude then row-major order. Returns None
    when every candidate window leaves the frame.
    """
    p = np.asarray(patch, dtype=np.float64)
    if p.shape != (PATCH_SIZE, PATCH_SIZE):
        raise InvalidInputError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}")
    cx = _round_half_up(float(center[0]))
    cy = _round_half_up(float(center[1]))
    lo, hi = params.offsets()
    offs = _offset_order(lo, hi)
    ty = cy + offs[:, 0] - PATCH_HALF
    tx = cx + offs[:, 1] - PATCH_HALF
    valid = ((ty >= 0) & (tx >= 0)
             & (ty + PATCH_SIZE <= frame.height) & (tx + PATCH_SIZE <= frame.width))
    if not valid.any():
        return None
    offs = offs[valid]
    ty = ty[valid]
    tx = tx[valid]

    win = np.lib.stride_tricks.sliding_window_view(frame.pixels, (PATCH_SIZE, PATCH_SIZE))
    cand = win[ty, tx].astype(np.float64).reshape(len(ty), -1)

    pa = p.reshape(-1) - p.mean()
    na = math.sqrt(float(pa @ pa))
    cm = cand.mean(axis=1)
    # sum(pa * (c - cm)) == sum(pa * c) because pa is zero-mean
    num = cand @ pa
    den_sq = (cand * cand).sum(axis=1) - cand.shape[1] * cm * cm
    den_sq[den_sq < 0] = 0.0
    den = na * np.sqrt(den_sq)
    scores = np.zeros(len(cand))
    ok = den > 1e-12
    scores[ok] = num[ok] / den[ok]
    if na < 1e-12:
        scores[:] = 0.0

    best = int(np.argmax(scores))  # first max in (magnitude, row-major) order
    dy, dx = offs[best]
    return (float(cx + dx), float(cy + dy)), float(scores[best])


def validate_pose(prev: Pose, new: Pose, target: TargetTemplate,
                  vp: ValidityParams = ValidityParams()) -> bool:
    """Translation-threshold pose gate (plus the optional rotation gate)."""
    limit = vp.translation_ratio * max(target.physical_width, target.physical_height)
    if float(np.linalg.norm(new.t - prev.t)) > limit:
        return False
    if vp.rotation_threshold_deg > 0:
        cos_t = (np.trace(prev.r.T @ new.r) - 1.0) / 2.0
        angle = math.degrees(math.acos(max(-1.0, min(1.0, cos_t))))
        if angle > vp.rotation_threshold_deg:
            return False
    return True


def track_frame(prev_h: Homography, tracked, frame: GrayImage,
                k: CameraIntrinsics, template: TargetTemplate,
                params: TrackParams = TrackParams(),
                pnp_params: PnpParams = PnpParams(),
                min_points: int = 8,
                ransac_params: RansacParams | None = None,
                timings_out: dict | None = None):
    """One steady-state tracking step. Returns (new_h, new_pose, survivors).

    Warps the template by prev_h, downsamples warp and frame (at the default
    half resolution), re-cuts each alive point's 5x5 patch from the warp at
    its predicted location, NCC-searches the frame around the same location,
    keeps matches scoring >= params.ncc_accept, then re-estimates the
    homography from the surviving (template -> frame) pairs and the pose via
    the corner-transfer + PnP path. Raises TrackingLostError when fewer than
    4 points survive or the estimation degenerates.
    """
    alive = [p for p in tracked if p.alive]
    if len(alive) < min_points:
        raise TrackingLostError(f"{len(alive)} alive points, need >= {min_points}")

    t0 = time.perf_counter_ns()
    warp = warp_template(template.image, prev_h, frame.size)
    if params.match_resolution == "half":
        warp_s = downsample2(warp)
        frame_s = downsample2(frame)
        scale = 2.0
    else:
        warp_s, frame_s, scale = warp, frame, 1.0
    t1 = time.perf_counter_ns()

    template_pts = np.array([p.template_point for p in alive])
    try:
        predicted = transform_points(prev_h, template_pts)
    except SingularProjectionError as e:
        raise TrackingLostError(f"prediction left the image plane: {e}") from e

    survivors = []
    for point, pred in zip(alive, predicted):
        pred_s = full_to_downsampled(pred, scale)
        patch = extract_patch(warp_s, pred_s)
        if patch is None:
            continue
        hit = ncc_search(frame_s, patch, pred_s, params)
        if hit is None:
            continue
        best, score = hit
        if score < params.ncc_accept:
            continue
        # compose the integer search offset with the subpixel prediction:
        # the offset is exact displacement information, the cut-center
        # rounding is not, so this keeps the pair quantized only once
        dx = best[0] - _round_half_up(pred_s[0])
        dy = best[1] - _round_half_up(pred_s[1])
        matched = (pred[0] + dx * scale, pred[1] + dy * scale)
        survivors.append(replace(point, last_frame_point=matched,
                                 patch=patch, alive=True))
    t2 = time.perf_counter_ns()

    if len(survivors) < 4:
        _note_timings(timings_out, t0, t1, t2, t2, t2)
        raise TrackingLostError(f"only {len(survivors)} NCC matches survived")

    src = np.array([p.template_point for p in survivors])
    dst = np.array([p.last_frame_point for p in survivors])
    try:
        if params.use_ransac:
            rp = ransac_params if ransac_params is not None else RansacParams(min_inliers=4)
            new_h, _ = ransac_homography(src, dst, rp, rng_seed=0)
        else:
            new_h = homography_dlt(src, dst)
    except (DegenerateGeometryError, EstimationFailedError) as e:
        _note_timings(timings_out, t0, t1, t2, time.perf_counter_ns(), None)
        raise TrackingLostError(f"homography re-estimation failed: {e}") from e
    t3 = time.perf_counter_ns()

    try:
        pose = pose_from_homography(new_h, template.corners_2d, template.corners_3d,
                                    k, pnp_params)
    except (PoseFailedError, DegenerateGeometryError, SingularProjectionError) as e:
        _note_timings(timings_out, t0, t1, t2, t3, None)
        raise TrackingLostError(f"pose estimation failed: {e}") from e
    t4 = time.perf_counter_ns()

    _note_timings(timings_out, t0, t1, t2, t3, t4)
    return new_h, pose, survivors


def _note_timings(out, t0, t1, t2, t3, t4):
    if out is None:
        return
    out["warp"] = (t1 - t0) // 1000
    out["ncc"] = (t2 - t1) // 1000
    out["ransac"] = 0 if t3 is None else (t3 - t2) // 1000
    out["pnp"] = 0 if (t4 is None or t3 is None) else (t4 - t3) // 1000
