"""Foundational image, camera, and geometry value types.

Conventions used throughout the package:

* Image coordinates: x to the right (column), y down (row), pixel centers at
  integer coordinates. An image of width W covers x in [0, W-1].
* Camera frame: x right, y down, z forward (optical axis). A pose maps
  target-plane coordinates into the camera frame: X_cam = R @ X_target + t.
* The target plane is z = 0 in target coordinates, with the origin at the
  physical center of the template.

All value types are immutable; their numpy payloads are marked read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError

# |det| floor below which a 3x3 map is treated as non-invertible
HOMOGRAPHY_DET_FLOOR = 1e-8

TWO_PI = 2.0 * math.pi


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class GrayImage:
    """8-bit single-channel raster: frames, templates, warps, patches.

    Stores pixels row-major as a read-only (height, width) uint8 array.
    """

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise InvalidInputError(f"expected a 2-d pixel array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"image must be at least 1x1, got {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.number):
                raise InvalidInputError(f"pixel dtype {arr.dtype} is not numeric")
            if arr.min() < 0 or arr.max() > 255:
                raise InvalidInputError("pixel values outside [0, 255]")
            arr = arr.astype(np.uint8)
        self.pixels = _readonly(arr)

    @classmethod
    def from_bytes(cls, data, width: int, height: int) -> "GrayImage":
        buf = np.frombuffer(bytes(data), dtype=np.uint8)
        if buf.size != width * height:
            raise InvalidInputError(
                f"buffer holds {buf.size} bytes, expected {width}x{height}={width * height}"
            )
        return cls(buf.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)."""
        return self.pixels.shape[1], self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        """Row-major flat uint8 view, length width*height."""
        return self.pixels.reshape(-1)

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.width, self.height, self.pixels.tobytes()))

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


def to_gray(rgba_buffer, width: int, height: int) -> GrayImage:
    """Convert a packed RGBA byte buffer to 8-bit gray.

    Uses integer-rounded BT.601 luma, round half up:
    luma = (299*R + 587*G + 114*B + 500) // 1000. Bit-exact on every platform.
    """
    buf = np.frombuffer(bytes(rgba_buffer), dtype=np.uint8)
    if buf.size != width * height * 4:
        raise InvalidInputError(
            f"RGBA buffer holds {buf.size} bytes, expected {width * height * 4}"
        )
    px = buf.reshape(height, width, 4).astype(np.uint32)
    luma = (299 * px[:, :, 0] + 587 * px[:, :, 1] + 114 * px[:, :, 2] + 500) // 1000
    return GrayImage(np.minimum(luma, 255).astype(np.uint8))


def bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Bilinear sample at float coordinates; out-of-bounds samples are 0.

    Returns (values float64, inside mask). A sample is inside iff
    0 <= x <= W-1 and 0 <= y <= H-1; bilinear at integer coords is exact.
    """
    h, w = pixels.shape
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    x = np.clip(xs, 0, w - 1)
    y = np.clip(ys, 0, h - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    p = pixels.astype(np.float64)
    v = (p[y0, x0] * (1 - fx) * (1 - fy)
         + p[y0, x1] * fx * (1 - fy)
         + p[y1, x0] * (1 - fx) * fy
         + p[y1, x1] * fx * fy)
    return np.where(inside, v, 0.0), inside


@dataclass(frozen=True)
class ImagePyramid:
    """Coarse-to-fine image stack; level 0 is the original image."""

    levels: tuple[GrayImage, ...]
    scale_factor: float

    def __len__(self):
        return len(self.levels)

    def level_scale(self, k: int) -> tuple[float, float]:
        """Actual (sx, sy) mapping level-k coordinates back to level 0."""
        base = self.levels[0]
        lv = self.levels[k]
        if k == 0:
            return 1.0, 1.0
        return base.width / lv.width, base.height / lv.height


def build_pyramid(image: GrayImage, levels: int, scale_factor: float = 2.0) -> ImagePyramid:
    """Downsampling pyramid. Level k has dimensions floor(dim / scale_factor**k).

    Levels are resampled from level 0 with center-aligned bilinear interpolation
    (for a factor of exactly 2 this equals the 2x2 block mean). The pyramid is
    truncated before the first level smaller than 16px on either side.
    """
    if levels < 1:
        raise InvalidInputError("levels must be >= 1")
    if scale_factor <= 1:
        raise InvalidInputError("scale_factor must be > 1")
    if image.width < 16 or image.height < 16:
        raise InvalidInputError("pyramid base must be at least 16x16")

    out = [image]
    src = image.pixels
    for k in range(1, levels):
        s = scale_factor ** k
        w = int(image.width / s)
        h = int(image.height / s)
        if w < 16 or h < 16:
            break
        rx = image.width / w
        ry = image.height / h
        xs = (np.arange(w) + 0.5) * rx - 0.5
        ys = (np.arange(h) + 0.5) * ry - 0.5
        gx, gy = np.meshgrid(xs, ys)
        vals, _ = bilinear_sample(src, gx, gy)
        out.append(GrayImage(np.floor(vals + 0.5).astype(np.uint8)))
    return ImagePyramid(levels=tuple(out), scale_factor=scale_factor)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics, pixels. No distortion model."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


class Homography:
    """3x3 invertible projective map, template plane -> image.

    Stored normalized: the bottom-right entry equals 1 when it is nonzero,
    otherwise the matrix has unit Frobenius norm.
    """

    __slots__ = ("h",)

    def __init__(self, h, det_floor: float = HOMOGRAPHY_DET_FLOOR):
        m = np.asarray(h, dtype=np.float64)
        if m.shape != (3, 3):
            raise InvalidInputError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("homography contains non-finite entries")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        else:
            n = np.linalg.norm(m)
            if n == 0:
                raise DegenerateGeometryError("zero homography")
            m = m / n
        if abs(np.linalg.det(m)) < det_floor:
            raise DegenerateGeometryError(
                f"homography is singular (|det| < {det_floor:g})"
            )
        self.h = _readonly(m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def __matmul__(self, other):
        if isinstance(other, Homography):
            return Homography(self.h @ other.h)
        return NotImplemented

    def __repr__(self):
        return f"Homography({self.h.tolist()})"


ROTATION_TOL = 1e-6


@dataclass(frozen=True)
class Pose:
    """Rigid camera-from-target transform: X_cam = r @ X_target + t (meters)."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise InvalidInputError(f"rotation must be 3x3, got {r.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidInputError("pose contains non-finite entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL:
            raise InvalidInputError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise InvalidInputError("rotation determinant is not 1 within 1e-6")
        object.__setattr__(self, "r", _readonly(r))
        object.__setattr__(self, "t", _readonly(t))

    def matrix4(self) -> np.ndarray:
        """4x4 homogeneous camera-from-target matrix, bottom row (0,0,0,1)."""
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m


@dataclass(frozen=True)
class Keypoint:
    """Detected interest point. Coordinates are subpixel, y down."""

    x: float
    y: float
    response: float = 0.0
    angle: float = 0.0
    octave: int = 0

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise InvalidInputError("keypoint coordinates must be non-negative")
        if not (0.0 <= self.angle < TWO_PI):
            raise InvalidInputError("keypoint angle must lie in [0, 2*pi)")

    @property
    def pt(self) -> tuple[float, float]:
        return (self.x, self.y)


DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8


@dataclass(frozen=True)
class Descriptor:
    """256-bit binary descriptor, packed MSB-first into 32 bytes."""

    bits: bytes

    def __post_init__(self):
        if len(self.bits) != DESCRIPTOR_BYTES:
            raise InvalidInputError(
                f"descriptor must pack {DESCRIPTOR_BITS} bits ({DESCRIPTOR_BYTES} bytes)"
            )

    @classmethod
    def from_bools(cls, flags) -> "Descriptor":
        arr = np.asarray(flags, dtype=bool)
        if arr.size != DESCRIPTOR_BITS:
            raise InvalidInputError(f"expected {DESCRIPTOR_BITS} flags, got {arr.size}")
        return cls(bits=np.packbits(arr).tobytes())

    def bit(self, i: int) -> int:
        return (self.bits[i // 8] >> (7 - i % 8)) & 1

    def as_int(self) -> int:
        return int.from_bytes(self.bits, "big")


@dataclass(frozen=True)
class TargetTemplate:
    """A trackable planar target: its image, described features, and physical extent.

    corners_2d holds the centers of the four corner pixels of the template
    image (clockwise from the top-left); corners_3d holds the matching points
    on the z=0 target plane in meters, centered on the target's middle.
    """

    image: GrayImage
    keypoints: tuple[Keypoint, ...]
    descriptors: tuple[Descriptor, ...]
    physical_width: float
    physical_height: float
    corners_2d: np.ndarray
    corners_3d: np.ndarray
    min_features: int = 8

    def __post_init__(self):
        if self.physical_width <= 0 or self.physical_height <= 0:
            raise InvalidInputError("physical size must be positive")
        if len(self.keypoints) != len(self.descriptors):
            raise InvalidInputError("keypoints and descriptors must be parallel lists")
        if len(self.keypoints) < self.min_features:
            raise InvalidInputError(
                f"template has {len(self.keypoints)} features, need >= {self.min_features}"
            )
        c2 = np.asarray(self.corners_2d, dtype=np.float64)
        c3 = np.asarray(self.corners_3d, dtype=np.float64)
        if c2.shape != (4, 2) or c3.shape != (4, 3):
            raise InvalidInputError("corners_2d must be (4,2), corners_3d must be (4,3)")
        if np.max(np.abs(c3[:, 2])) > 1e-12:
            raise InvalidInputError("corners_3d must lie on the z=0 plane")
        span = c3.max(axis=0) - c3.min(axis=0)
        if (abs(span[0] - self.physical_width) > 1e-9
                or abs(span[1] - self.physical_height) > 1e-9):
            raise InvalidInputError("corners_3d must span physical_width x physical_height")
        object.__setattr__(self, "corners_2d", _readonly(c2))
        object.__setattr__(self, "corners_3d", _readonly(c3))
        object.__setattr__(self, "keypoints", tuple(self.keypoints))
        object.__setattr__(self, "descriptors", tuple(self.descriptors))

    @classmethod
    def make(cls, image: GrayImage, keypoints, descriptors,
             physical_width: float, physical_height: float,
             min_features: int = 8) -> "TargetTemplate":
        """Build a template with the standard corner layout for this image."""
        w, h = image.width, image.height
        c2 = np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])
        hw, hh = physical_width / 2.0, physical_height / 2.0
        c3 = np.array([[-hw, -hh, 0.0], [hw, -hh, 0.0], [hw, hh, 0.0], [-hw, hh, 0.0]])
        return cls(image=image, keypoints=tuple(keypoints), descriptors=tuple(descriptors),
                   physical_width=physical_width, physical_height=physical_height,
                   corners_2d=c2, corners_3d=c3, min_features=min_features)

    def plane_points(self, pts_px) -> np.ndarray:
        """Map template pixel coordinates to 3-D points on the z=0 target plane."""
        p = np.atleast_2d(np.asarray(pts_px, dtype=np.float64))
        w, h = self.image.width, self.image.height
        x = (p[:, 0] / (w - 1) - 0.5) * self.physical_width
        y = (p[:, 1] / (h - 1) - 0.5) * self.physical_height
        return np.column_stack([x, y, np.zeros(len(p))])
