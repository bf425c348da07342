"""FAST corner detection and oriented binary patch description.

The detector is FAST-9 (segment test on the 16-pixel Bresenham ring of radius
3) with 3x3 non-maximum suppression on the arc-contrast response. Description
is a 256-pair intensity-comparison descriptor computed on a 5x5 box-smoothed
patch, with the sampling pattern steered by the keypoint's intensity-centroid
orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Descriptor, GrayImage, Keypoint, build_pyramid
from .errors import InvalidInputError, TooFewFeaturesError

# 16-pixel ring of radius 3 around a candidate, clockwise from (0,-3)
RING_OFFSETS = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)

ARC_LENGTH = 9          # FAST-9
PATCH_RADIUS = 15       # 31x31 description / orientation patch

# Descriptor sampling pattern: 256 point pairs (px, py, qx, qy) relative to
# the patch center. Drawn once from an isotropic Gaussian with sigma = 31/5
# using numpy's PCG64 stream with seed 19562131; a draw is accepted iff both
# endpoints have Euclidean norm <= 14.5 (any steering rotation then lands
# nearest-pixel samples inside the patch) and the rounded endpoints differ.
# Regenerate with generate_pattern(); the CLI's dump-pattern prints it as CSV.
PATTERN_SEED = 19562131
PATTERN_SIGMA = 31 / 5.0

SAMPLING_PATTERN = np.array([
      4,  -1,   3,  -1,  -6,   8,  -3, -12,   3,  -1,  -3,   0,  -3,   7,  -2,   4,
     -3,  -2,   5,  -2,  -3,  -7,  -8,   6,  -7,  -6,   8,  -4,   4,   0,   2,   0,
      0,   5,   6,   1,  -4,   8,   0,  10,  -2,   7,   0,   3,   2,  -3,  -2,  -1,
      1,   1,  10,  -3,   6,  -9,  -1,  -1,   0,   8,  -1,   7,  11,  -3,  -5, -13,
      4,  -6,   5,   9,   7,   0,   5,  -4,   5,  -3,   1,   4,   5,  -3,   1,  -1,
     -2,   0,  -4,  -6,  -1,   0,   0,  -4,  -3,   0, -11,   3, -11,   2,  -6,   0,
      6,   1,   7,  -4,  -7,   8,   8,   3,   5,   6,   7,  -6,  -4,   5,   0,  -3,
     -4,  -4,  -5,  -4,  -1,   0,  -3,  -9,  -4,  11,   6,   1,   0,  -4,  -1,  10,
     -1,   6,   1,  -8,  -1,   5,   1,  -3,  -2,   0,  -7,   3,  -6,  -2,   6,   5,
     -1,   4,   0,  -5,  -5, -13,   6, -11,  -5,   1,  -2, -10,  10,  -2,  -2,  -8,
     -2,   2,  -5,   0,  -5,  10,   4,  -2,   5,  -6,  -8,  -2,  -2,   7,   3,  -7,
     -8,   9,  -9,  -1,  -5,  -1,  -6,  -5,  -2,  -8,  -6, -10,  -2,   5,   3,   2,
      9,  11,   1, -11, -14,   4,   2,   1,  -4,  -9,  -1,  11,   2, -10,   8,   2,
     -1,   4,  -8, -10, -10,  -5,  -1,   5,  -2,   9,  -1,  -2,   5,  -1,  -6,   3,
     -3,   7,   3,   5,  -4,  -5,   3,   0,   3,  -6,  -2,  -2,   5,   3,  -1,   3,
      1,   8,  -3, -13, -10,  -6,  11,   0,   2,  -8,  -3,   9,  -3,  -5,  -4,  -6,
    -11,   0,   6,  -8,   1,   3,  -4,   6,  -1, -12,   8,  -7,   1,   1,   0,  -2,
     -2,   1,   8,  -1,  -8,   8,  -4,  -5,  -2,  -5,  -3,   0,  -1,   6,   1, -10,
      6, -13,   8,   0,   5,  -1,  -2,   9,   2, -13,   1,  -5,   4,  -4,   7,  -2,
    -11,  -3,  -7,   0,  -3,  -4,   3,  -5,   1, -11,  11,   3,  -2,  10,   0,  -1,
      5, -10,   0,  -6,   1,   4,  -1,  13,  -5,   3,   7,   0,   0,  10,  -3,  -3,
     -4,  -4,  -3,   3,   5,  11,  -1,   1,  10,   6,   1,  -6,  13,   5,   3,   1,
      9,   7,   3,  -4,   4,  -1,   2,   6,   5,   2,   2,  -2,   5,   2,  -3,   1,
      2,  11,  -6,   1,  -2,   5,  -1,   1,   6,   6,  -1,   6,  -4,   3,   4,   8,
      1,   4,  -4,  -3,   1,  -7,  13,   1,   7,   2,   4,   6,  -3,  -2,   4,  -5,
     -3,   7,  -2,   0,   2,   2,   0,   8,   9,  -5,   5,   0,   1, -12,  10,  -4,
      9,  -2,  -8,  -1,   2,  11,   4,  -7,  -6,   0,  -6,  -5,  -8,   5,  -2,  -7,
     -6,  -3,   3,  -3,   3,  -1,   6,   8,   0,   4,  -4,  -4,   4,  -3,  -2,   0,
      2, -10,   9,   3,   2,  -1,  11,  -6, -12,   7,   2,  -7,  -6,   5,   4,   7,
      0,  11,  -1,  10,  -9,   2,   0,   0,   0, -10,  10,   2,   3,   8,   8,   0,
      9,  -4,   1,   0,   4,  -1,   1,  -2,   5,   6,  -1,  -3,   0,   2,   9,   8,
      7,  -4,   2,  -1,   9,   0,   2,   7,  -3,  -5,   2,   5,  -2,   1,  -1,  -6,
     -3,   4,  -6,   1,   4,   1,   3,  -8,   5,   5,  -7,   6,   5,  -3,  -9,   3,
     -4,   4,  -4,  -3,  -9,  -2, -11,  -2, -12,   3,  -2,  -5, -12,  -3,  -4,  12,
     -2,  -6,  -5,   8,   3,   2,  -5,   3,   7,  -3,  -6,   3,  -8, -10,  -1, -12,
      0,  10,   2,  -1,  -3,   0,  13,   1,   1,  -7,   6,  -3,   8,  10,  -3, -11,
     -2,   1,   0,   1,  -7,  -5,  -1,  13,   2,  12,   2,   5,   9, -11,  -4,  -6,
      8,  -6,  -3,  -7,   4,   5,   0,  -5,  -3,  -4, -14,   1, -12,   5,  -1,  -6,
     -6,   2,  -1,   7,   3,   2,   1,   5,   1,   6,  -5,   2, -10,   4,   2,   6,
    -11,  -7,  -4,   0,   1,   0,   3,  -1,  14,   3,  -1,   4,   2,   9,   1,  -1,
     -7,  -2,  -6,   1,   1,  11,   4,   2,  -3,   0,  -1,   6,   2,  -2,   4,  -7,
      7,  -2,   5,   0,  -3,   1,   0, -13,  -1,  -7,   3,  -1,  -1,   3,   2,  -3,
     -3,  -5,   3,   3, -10,  -9,   3,   8,   2,   5,  -3,   6,   2,  -2,  -8,  -8,
      4,   2,  10,   1,  -8,   2,   0,  -1,   3,  -5,   9,  -4,  -5,  -6,  -6,   0,
      3,   1,  -6,   5,   5,   1,  -2,   7,   2,  -7,  -7,   4,  -7,   6,   0,   4,
     -5,   0,  -4,   5,  10,   4,   2,   5,  -2,   6,  -6,   1,   3,  -6,   1,  -4,
      1,  -3,  -2,   4,   1, -12,  -1,  12,   3,   8,   9,   0,  -5, -10,   6,  -4,
      2,   1,  -4,  -9,   4,   2,   1, -10,  -7,   3,   8,  -3,   6,  -1,   6,  -4,
     -3,  -6,   5,   1,   4,  -1,   0,   1,   5,  -1,   6,  -9, -11,   2,  -1,   0,
      0,   0,   7,   5,  -8, -11,  -8, -10,   6,   8, -12,   5,   6,  -8,   1,  10,
     -2,   4, -13,  -1,   0,   0,  -3,   4,   1, -10,   7,   4,   4,   2,  -3,   9,
     -2,   2,  -2,  -5,   6,   6,  -3,   1,  10,   2,   4,  -4,   0,   4,  -3, -10,
     -2,  -8,   4,  -5,  -9,   4,  -6,  -3,  12,  -1,  -2,   1,   8,   5,  -5,  -7,
     -7,   2,   7,  -7,  -8,   3,  -6,  -5,  -8,   1,  -5,   2,  -5, -12,  -4,   8,
    -10,  -3,  -3, -11,   0,   4, -10,  -3,   2,  -9,  10,   1,  -3,   2,  11,   1,
     -8,  -4, -11,   0,  -6,  11,   0,  10,  -5,  -6,  -8,   2,   1,  -1,  -3,  -8,
      2,  -1,  -8,  -1,  -1,   1,  -9,   7,   1,  -8,   7,  -7,   7,  -3,   1,  -2,
     -3,   6,   1,   6,   9,  -2,  -2,  -7,   4,  -6,  14,  -1,  -8,  -8,   6,   6,
      2,   3,  12,   6,  -1,   5,   0,   8,   1,  -8,  -2,  -8,   2,  -1,   0,  -6,
     -5,   5,   0,   0,  -7,   4,   4,  -2,   5,  -2,  11,  10,   7,   0,   4,  -5,
     12,   3,   3,  -1,   7, -12,   3,  -4,  -3, -13,  -7,   6,   4,  -8,   6,  10,
      0,  -2,   5,  -5,  -7,  -8,  -2,   0,   0,  11,   4,  -8,  -3,   3,  -2,  -1,
      8, -10,   6,   3,   1, -11,   0,   0,  -3,  -1,  -2,   2,  -1,  -6,  -5,  -7,
      3,   1,   4,  12,   3,   4,   6,  -9,   1,   8,  -8,   7,  -3,  -8,   6, -11,
], dtype=np.int16).reshape(256, 4)
SAMPLING_PATTERN.setflags(write=False)


def generate_pattern(seed: int = PATTERN_SEED, sigma: float = PATTERN_SIGMA) -> np.ndarray:
    """Regenerate the sampling pattern from its seed (documentation/verification)."""
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < 256:
        p = rng.normal(0.0, sigma, 2)
        q = rng.normal(0.0, sigma, 2)
        if math.hypot(*p) > 14.5 or math.hypot(*q) > 14.5:
            continue
        pi = np.floor(p + 0.5).astype(int)
        qi = np.floor(q + 0.5).astype(int)
        if pi[0] == qi[0] and pi[1] == qi[1]:
            continue
        pairs.append((pi[0], pi[1], qi[0], qi[1]))
    return np.array(pairs, dtype=np.int16)


def box_smooth5(image: GrayImage) -> np.ndarray:
    """5x5 box filter with edge replication, round half up. Returns uint8."""
    p = np.pad(image.pixels.astype(np.int32), 2, mode="edge")
    # integral image -> window sums
    ii = np.zeros((p.shape[0] + 1, p.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = p.cumsum(axis=0).cumsum(axis=1)
    h, w = image.pixels.shape
    s = ii[5:5 + h, 5:5 + w] - ii[:h, 5:5 + w] - ii[5:5 + h, :w] + ii[:h, :w]
    return ((2 * s + 25) // 50).astype(np.uint8)


def _segment_masks(px: np.ndarray, threshold: int):
    """Per-interior-pixel FAST-9 bright/dark arc membership.

    Returns (is_corner, member) where member marks ring positions belonging to
    a qualifying contiguous arc (length >= 9) of either polarity.
    """
    h, w = px.shape
    c = px[3:h - 3, 3:w - 3]
    ring = np.empty((16,) + c.shape, dtype=np.int16)
    for i, (dx, dy) in enumerate(RING_OFFSETS):
        ring[i] = px[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx]
    bright = ring > (c + threshold)
    dark = ring < (c - threshold)

    member = np.zeros_like(bright)
    for mask in (bright, dark):
        window_ok = np.empty_like(mask)
        for s in range(16):
            acc = mask[s].copy()
            for j in range(1, ARC_LENGTH):
                acc &= mask[(s + j) % 16]
            window_ok[s] = acc
        # ring position i belongs to a qualifying arc iff one of the 9
        # windows covering i is fully qualifying
        for i in range(16):
            acc = window_ok[(i - ARC_LENGTH + 1) % 16].copy()
            for s in range(i - ARC_LENGTH + 2, i + 1):
                acc |= window_ok[s % 16]
            member[i] |= acc & mask[i]
    is_corner = member.any(axis=0)
    return is_corner, member, ring, c


def detect_fast(image: GrayImage, threshold: int = 20,
                max_points: int | None = None) -> list[Keypoint]:
    """FAST-9 segment-test corners, 3x3 non-max suppressed, sorted by response.

    A pixel is a corner iff >= 9 contiguous ring pixels are all brighter than
    center+threshold or all darker than center-threshold. The response is the
    sum of |ring - center| over the qualifying contiguous arc. Suppression
    keeps a corner iff its response is >= all 8 neighbours' and strictly
    greater than the neighbours that precede it in raster order, so plateaus
    keep exactly their first pixel.
    """
    if image.width < 7 or image.height < 7:
        raise InvalidInputError("FAST needs at least a 7x7 image")
    if threshold < 1:
        raise InvalidInputError("threshold must be >= 1")

    px = image.pixels.astype(np.int16)
    is_corner, member, ring, c = _segment_masks(px, threshold)

    resp = np.zeros(px.shape, dtype=np.int32)
    diff = np.abs(ring.astype(np.int32) - c.astype(np.int32))
    resp[3:-3, 3:-3] = (diff * member).sum(axis=0)

    r = np.pad(resp, 1)
    center = r[1:-1, 1:-1]
    keep = center > 0
    # preceding neighbours in raster order: strict; following: non-strict
    for dy, dx, strict in ((-1, -1, True), (-1, 0, True), (-1, 1, True), (0, -1, True),
                           (0, 1, False), (1, -1, False), (1, 0, False), (1, 1, False)):
        n = r[1 + dy:r.shape[0] - 1 + dy, 1 + dx:r.shape[1] - 1 + dx]
        keep &= (center > n) if strict else (center >= n)

    ys, xs = np.nonzero(keep)
    if len(ys) == 0:
        return []
    responses = resp[ys, xs]
    order = np.lexsort((xs, ys, -responses))
    if max_points is not None:
        order = order[:max_points]
    return [Keypoint(x=float(xs[i]), y=float(ys[i]), response=float(responses[i]))
            for i in order]


_DISC_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _disc_offsets(radius: int):
    if radius not in _DISC_CACHE:
        r = np.arange(-radius, radius + 1)
        dx, dy = np.meshgrid(r, r)
        inside = dx * dx + dy * dy <= radius * radius
        _DISC_CACHE[radius] = (dx[inside].copy(), dy[inside].copy())
    return _DISC_CACHE[radius]


def orientation(image: GrayImage, kp: Keypoint, radius: int = PATCH_RADIUS) -> float:
    """Intensity-centroid orientation in [0, 2*pi), y pointing down.

    angle = atan2(m01, m10) with m10 = sum(x * I), m01 = sum(y * I) over the
    circular patch of the given radius centered on the keypoint. A perfectly
    balanced patch (m10 = m01 = 0) maps to angle 0 (low confidence).
    """
    cx = int(math.floor(kp.x + 0.5))
    cy = int(math.floor(kp.y + 0.5))
    if (cx - radius < 0 or cy - radius < 0
            or cx + radius >= image.width or cy + radius >= image.height):
        raise InvalidInputError("orientation patch does not fit in the image")
    dx, dy = _disc_offsets(radius)
    vals = image.pixels[cy + dy, cx + dx].astype(np.int64)
    m10 = int((dx * vals).sum())
    m01 = int((dy * vals).sum())
    if m10 == 0 and m01 == 0:
        return 0.0
    return math.atan2(m01, m10) % (2.0 * math.pi)


def describe(image: GrayImage, kp: Keypoint) -> Descriptor:
    """256-bit descriptor for one keypoint; smooths the whole image first.

    Prefer describe_all() when describing many keypoints of one image.
    """
    return describe_all(image, [kp], box_smooth5(image))[0]


def describe_all(image: GrayImage, keypoints, smoothed: np.ndarray | None = None) -> list[Descriptor]:
    """Descriptors for keypoints of one image (31x31 patches must fit).

    Bit i is 1 iff S(p_i) < S(q_i) on the box-smoothed image S, with the
    pattern's pair coordinates rotated by each keypoint's angle and sampled at
    the nearest pixel.
    """
    if smoothed is None:
        smoothed = box_smooth5(image)
    h, w = smoothed.shape
    out = []
    pat = SAMPLING_PATTERN.astype(np.float64)  # (256, 4)
    for kp in keypoints:
        cx = int(math.floor(kp.x + 0.5))
        cy = int(math.floor(kp.y + 0.5))
        if (cx - PATCH_RADIUS < 0 or cy - PATCH_RADIUS < 0
                or cx + PATCH_RADIUS >= w or cy + PATCH_RADIUS >= h):
            raise InvalidInputError("description patch does not fit in the image")
        ca, sa = math.cos(kp.angle), math.sin(kp.angle)
        rx = np.floor(ca * pat[:, 0::2] - sa * pat[:, 1::2] + 0.5).astype(np.intp)
        ry = np.floor(sa * pat[:, 0::2] + ca * pat[:, 1::2] + 0.5).astype(np.intp)
        a = smoothed[cy + ry[:, 0], cx + rx[:, 0]]
        b = smoothed[cy + ry[:, 1], cx + rx[:, 1]]
        out.append(Descriptor(bits=np.packbits(a < b).tobytes()))
    return out


@dataclass(frozen=True)
class FeatureConfig:
    """Detection/description parameters. Defaults follow standard practice;
    the per-level budget is proportional to level area."""

    fast_threshold: int = 20
    max_features: int = 500
    min_features: int = 8
    levels: int = 4
    scale_factor: float = 2.0

    def __post_init__(self):
        if self.fast_threshold < 1 or self.max_features < 1 or self.min_features < 1:
            raise InvalidInputError("feature config values must be positive")
        if self.levels < 1 or self.scale_factor <= 1:
            raise InvalidInputError("need levels >= 1 and scale_factor > 1")


def detect_and_describe(image: GrayImage, config: FeatureConfig = FeatureConfig()):
    """Multi-scale detection + description.

    Runs detect_fast per pyramid level with an area-proportional share of
    config.max_features, rejects keypoints whose 31x31 patch does not fit,
    computes orientations and descriptors on the level image, and rescales
    coordinates to level 0. Output is sorted by (response desc, octave, y, x)
    and capped at config.max_features.

    Raises TooFewFeaturesError when fewer than config.min_features survive.
    """
    pyramid = build_pyramid(image, config.levels, config.scale_factor)
    areas = [lv.width * lv.height for lv in pyramid.levels]
    total_area = float(sum(areas))

    found: list[tuple[Keypoint, Descriptor]] = []
    for k, level in enumerate(pyramid.levels):
        budget = max(1, int(round(config.max_features * areas[k] / total_area)))
        kps = detect_fast(level, config.fast_threshold, max_points=None)
        kps = [p for p in kps
               if PATCH_RADIUS <= p.x < level.width - PATCH_RADIUS
               and PATCH_RADIUS <= p.y < level.height - PATCH_RADIUS]
        kps = kps[:budget]
        if not kps:
            continue
        smoothed = box_smooth5(level)
        oriented = [Keypoint(x=p.x, y=p.y, response=p.response,
                             angle=orientation(level, p), octave=k) for p in kps]
        descs = describe_all(level, oriented, smoothed)
        sx, sy = pyramid.level_scale(k)
        for p, d in zip(oriented, descs):
            found.append((Keypoint(x=p.x * sx, y=p.y * sy, response=p.response,
                                   angle=p.angle, octave=k), d))

    found.sort(key=lambda t: (-t[0].response, t[0].octave, t[0].y, t[0].x))
    found = found[:config.max_features]
    if len(found) < config.min_features:
        raise TooFewFeaturesError(
            f"found {len(found)} features, need >= {config.min_features}")
    keypoints = [t[0] for t in found]
    descriptors = [t[1] for t in found]
    return keypoints, descriptors
