"""Grayscale image I/O: native PGM (P2/P5), other formats via Pillow if present.

Images are exchanged as float64 arrays in [0, 1]; 8-bit PGM round-trips
losslessly.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import FormatError

__all__ = ["read_image", "write_image"]


def _read_pgm_tokens(data: bytes, count: int, pos: int):
    """Read whitespace/comment-separated header tokens from PGM data."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise FormatError(f"not a PGM file: {path}")
    binary = data[:2] == b"P5"
    tokens, pos = _read_pgm_tokens(data, 3, 2)
    width, height, maxval = (int(t) for t in tokens)
    if maxval <= 0:
        raise FormatError("PGM maxval must be positive")
    if maxval > 255:
        raise FormatError("16-bit PGM is not supported")
    if binary:
        pos += 1  # single whitespace after maxval
        raw = data[pos:pos + width * height]
        if len(raw) < width * height:
            raise FormatError("truncated PGM pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).astype(float)
    else:
        vals = data[pos:].split()
        if len(vals) < width * height:
            raise FormatError("truncated PGM pixel data")
        pixels = np.array([int(v) for v in vals[:width * height]], dtype=float)
    if pixels.max(initial=0.0) > maxval:
        raise FormatError("PGM pixel exceeds declared maxval")
    return pixels.reshape(height, width) / float(maxval)


def write_pgm(path: str, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise FormatError("PGM images must be 2-d")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pixels.tobytes())


def read_image(path: str) -> np.ndarray:
    """Read a grayscale image as float64 in [0, 1]."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        return read_pgm(path)
    try:
        from PIL import Image
    except ImportError as exc:
        raise FormatError(
            f"only PGM is supported natively; install Pillow for {ext!r}"
        ) from exc
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=float)
    except OSError as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc
    return arr / 255.0


def write_image(path: str, image: np.ndarray) -> None:
    """Write a [0, 1] grayscale image; PGM natively, others via Pillow."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        write_pgm(path, image)
        return
    try:
        from PIL import Image
    except ImportError as exc:
        raise FormatError(
            f"only PGM is supported natively; install Pillow for {ext!r}"
        ) from exc
    pixels = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path)
