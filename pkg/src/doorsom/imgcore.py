"""Raster types, binary Netpbm I/O and Gaussian smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


class PnmError(ValueError):
    """Malformed Netpbm data. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major 8-bit luminance raster; ``data`` has shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"gray image needs a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("gray pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Row-major 8-bit RGB raster; ``data`` has shape (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"rgb image needs shape (h, w, 3), got {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("rgb channel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_gray(cls, img: GrayImage) -> "RgbImage":
        return cls(np.repeat(img.data[:, :, None], 3, axis=2))

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


Image = Union[GrayImage, RgbImage]

_WHITESPACE = b" \t\n\r\v\f"


def _header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Return the next header token and the offset just past it."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in _WHITESPACE:
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PnmError("unexpected end of header", pos)
    return buf[start:pos], pos


def _header_int(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, end = _header_token(buf, pos)
    if not tok.isdigit():
        raise PnmError(f"invalid {what} {tok!r}", end - len(tok))
    return int(tok), end


def load_pnm(buf: bytes) -> Image:
    """Decode a binary PGM (P5) or PPM (P6) byte string."""
    buf = bytes(buf)
    if len(buf) < 2:
        raise PnmError("missing magic number", 0)
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"bad magic {magic!r}, expected b'P5' or b'P6'", 0)
    channels = 1 if magic == b"P5" else 3
    pos = 2
    if pos < len(buf) and buf[pos : pos + 1] not in _WHITESPACE and buf[pos : pos + 1] != b"#":
        raise PnmError("magic must be followed by whitespace", pos)
    width, pos = _header_int(buf, pos, "width")
    height, pos = _header_int(buf, pos, "height")
    maxval, pos = _header_int(buf, pos, "maxval")
    maxval_at = pos
    while maxval_at > 0 and buf[maxval_at - 1 : maxval_at].isdigit():
        maxval_at -= 1
    if width < 1 or height < 1:
        raise PnmError(f"non-positive size {width}x{height}", maxval_at)
    if not 0 < maxval <= 255:
        raise PnmError(f"maxval {maxval} not in 1..255", maxval_at)
    if pos >= len(buf) or buf[pos : pos + 1] not in _WHITESPACE:
        raise PnmError("header must end with a single whitespace byte", pos)
    pos += 1
    need = width * height * channels
    body = buf[pos : pos + need]
    if len(body) < need:
        raise PnmError(
            f"truncated body: expected {need} bytes, found {len(body)}", pos + len(body)
        )
    arr = np.frombuffer(body, dtype=np.uint8)
    if maxval != 255 and arr.max(initial=0) > maxval:
        raise PnmError(f"pixel value exceeds maxval {maxval}", pos + int(np.argmax(arr > maxval)))
    if channels == 1:
        return GrayImage(arr.reshape(height, width).copy())
    return RgbImage(arr.reshape(height, width, 3).copy())


def save_pnm(img: Image) -> bytes:
    """Encode as P5 (gray) or P6 (RGB), maxval 255."""
    magic = b"P5" if isinstance(img, GrayImage) else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.data.tobytes()


def read_pnm(path) -> Image:
    return load_pnm(Path(path).read_bytes())


def write_pnm(path, img: Image) -> None:
    Path(path).write_bytes(save_pnm(img))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps over radius ceil(3*sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _convolve_axis(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    r = len(k) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    p = np.pad(a, pad, mode="edge")
    n = a.shape[axis]
    out = np.zeros(a.shape, dtype=np.float64)
    for i, w in enumerate(k):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out += w * p[tuple(sl)]
    return out


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with replicated borders.

    Accepts a :class:`GrayImage` or any 2-D array and returns a float64
    raster; re-quantization is left to the caller.
    """
    k = gaussian_kernel(sigma)
    a = np.asarray(img.data if isinstance(img, GrayImage) else img, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("gaussian_blur expects a 2-D raster")
    return _convolve_axis(_convolve_axis(a, k, 1), k, 0)


def to_gray_image(raster: np.ndarray) -> GrayImage:
    """Round and clip a real raster to 8 bits."""
    return GrayImage(np.clip(np.rint(raster), 0, 255).astype(np.uint8))
