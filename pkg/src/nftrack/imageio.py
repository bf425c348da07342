"""Image file I/O. Binary PGM (P5, maxval 255) is the bit-exact fixture format;
PNG (8-bit gray or RGBA) is supported when Pillow is installed."""

from __future__ import annotations

import os

import numpy as np

from .core import GrayImage, to_gray
from .errors import InvalidInputError


def load_pgm(path) -> GrayImage:
    """Read a binary PGM (P5) file with maxval 255."""
    with open(path, "rb") as f:
        raw = f.read()

    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments run to end of line; one whitespace byte precedes the raster
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(raw):
            raise InvalidInputError(f"{path}: truncated PGM header")
        c = raw[i:i + 1]
        if c == b"#":
            while i < len(raw) and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j:j + 1].isspace() and raw[j:j + 1] != b"#":
                j += 1
            tokens.append(raw[i:j])
            i = j
    i += 1  # single whitespace after maxval

    if tokens[0] != b"P5":
        raise InvalidInputError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise InvalidInputError(f"{path}: maxval must be 255, got {maxval}")
    data = raw[i:i + width * height]
    if len(data) != width * height:
        raise InvalidInputError(f"{path}: raster is short ({len(data)} of {width * height} bytes)")
    return GrayImage.from_bytes(data, width, height)


def save_pgm(image: GrayImage, path) -> None:
    with open(path, "wb") as f:
        f.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        f.write(image.pixels.tobytes())


def load_png(path) -> GrayImage:
    """Read an 8-bit gray or RGBA PNG. Requires Pillow."""
    try:
        from PIL import Image
    except ImportError as e:  # pragma: no cover
        raise InvalidInputError("PNG support needs Pillow (pip install nftrack[png])") from e
    with Image.open(path) as im:
        if im.mode == "L":
            return GrayImage(np.asarray(im, dtype=np.uint8))
        rgba = im.convert("RGBA")
        arr = np.asarray(rgba, dtype=np.uint8)
        return to_gray(arr.tobytes(), rgba.width, rgba.height)


def load_image(path) -> GrayImage:
    """Dispatch on file extension (.pgm or .png)."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        return load_pgm(path)
    if ext == ".png":
        return load_png(path)
    raise InvalidInputError(f"unsupported image format: {path}")
