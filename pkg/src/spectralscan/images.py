"""Image ingestion, exact quarter-turn rotation, and seeded synthetic images.

Images are row-major float32 rasters in [0, 1]. Quarter turns are counted
counter-clockwise; a turn value is an integer in {0,1,2,3} and composition is
addition mod 4. The 90-degree CCW convention is output(i,j) = input(j, W-1-i),
which keeps the pixel grid exact (no interpolation anywhere).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, PpmParseError, UnsupportedFormatError
from .rng import Xorshift64Star


@dataclass(frozen=True)
class ImageTensor:
    """Dense H x W x C raster, float32 in [0,1]. Treated as immutable."""

    height: int
    width: int
    channels: int
    data: np.ndarray

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageTensor":
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ArgumentError(f"expected H x W x {{1,3}} array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ArgumentError("image contains non-finite samples")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ArgumentError("image samples must lie in [0, 1]")
        h, w, c = arr.shape
        return cls(height=h, width=w, channels=c, data=arr)


def _check_turn(q: int) -> int:
    if q not in (0, 1, 2, 3):
        raise ArgumentError(f"quarter turn must be in {{0,1,2,3}}, got {q}")
    return q


def compose_turns(q1: int, q2: int) -> int:
    return (_check_turn(q1) + _check_turn(q2)) % 4


def inverse_turn(q: int) -> int:
    return (4 - _check_turn(q)) % 4


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n and data[pos : pos + 1].isspace():
        pos += 1
    if pos >= n:
        raise PpmParseError("unexpected end of header", pos)
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_ppm(data: bytes) -> ImageTensor:
    """Parse a binary P6 PPM with 8-bit samples; values scale to v/255."""
    if data[:2] != b"P6":
        raise PpmParseError("missing P6 magic", 0)
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _next_token(data, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise PpmParseError(f"non-numeric header token {token!r}", pos) from None
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise PpmParseError(f"bad dimensions {width}x{height}", pos)
    if maxval != 255:
        raise PpmParseError(f"unsupported maxval {maxval}", pos)
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PpmParseError("expected single whitespace after maxval", pos)
    pos += 1
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise PpmParseError(
            f"truncated payload: need {need} bytes, have {len(payload)}",
            pos + len(payload),
        )
    raw = np.frombuffer(payload, dtype=np.uint8, count=need)
    arr = (raw.astype(np.float32) / np.float32(255.0)).reshape(height, width, 3)
    return ImageTensor(height=height, width=width, channels=3, data=arr)


def write_ppm(img: ImageTensor) -> bytes:
    """Serialize to binary P6; inverse of read_ppm up to 1/255 quantization."""
    if img.channels != 3:
        raise UnsupportedFormatError(
            f"P6 needs 3 channels, image has {img.channels}"
        )
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    quant = np.rint(img.data.astype(np.float64) * 255.0).astype(np.uint8)
    return header + quant.tobytes()


def rotate_quarter(img: ImageTensor, q: int) -> ImageTensor:
    """Rotate by q*90 degrees CCW. q=0 returns the input unchanged."""
    _check_turn(q)
    if q == 0:
        return img
    rot = np.ascontiguousarray(np.rot90(img.data, k=q, axes=(0, 1)))
    h, w = rot.shape[0], rot.shape[1]
    return ImageTensor(height=h, width=w, channels=img.channels, data=rot)


def rotate_grid(data: np.ndarray, q: int) -> np.ndarray:
    """Quarter-turn an H x W x C array of cell vectors (channels untouched)."""
    _check_turn(q)
    if q == 0:
        return data
    return np.ascontiguousarray(np.rot90(data, k=q, axes=(0, 1)))


def synth_two_cluster(
    hp: int, wp: int, patch: int, gap: float, seed: int
) -> ImageTensor:
    """hp x wp patch grid whose left and right halves differ in mean by >= `gap`.

    Base intensities sit (gap + 2*margin) apart, where the small margin
    absorbs float32 quantization. Per-pixel noise comes from the seeded
    xorshift64* stream with amplitude min(gap/5, base distance to the [0,1]
    bounds) and is added in antithetic pairs per half, so each half's mean
    stays at its base up to rounding.
    """
    if hp < 2 or wp < 2:
        raise ArgumentError(f"need at least a 2x2 patch grid, got {hp}x{wp}")
    if patch < 1:
        raise ArgumentError(f"patch size must be positive, got {patch}")
    if not (0.0 < gap <= 1.0):
        raise ArgumentError(f"gap must be in (0, 1], got {gap}")

    margin = min(1e-5, (1.0 - gap) / 2.0)
    lo = (1.0 - gap) / 2.0 - margin
    hi = (1.0 + gap) / 2.0 + margin
    amp = min(gap / 5.0, lo, 1.0 - hi)
    h = hp * patch
    w = wp * patch
    half = (wp // 2) * patch
    img = np.empty((h, w, 3), dtype=np.float64)
    img[:, :half, :] = lo
    img[:, half:, :] = hi

    if amp > 0.0:
        rng = Xorshift64Star(seed)
        for lo_col, hi_col in ((0, half), (half, w)):
            count = h * (hi_col - lo_col) * 3
            pairs = count // 2
            draws = rng.floats(pairs)
            noise = np.empty(count, dtype=np.float64)
            noise[0 : 2 * pairs : 2] = (draws - 0.5) * (2.0 * amp)
            noise[1 : 2 * pairs : 2] = -noise[0 : 2 * pairs : 2]
            if count % 2:
                noise[-1] = 0.0
            img[:, lo_col:hi_col, :] += noise.reshape(h, hi_col - lo_col, 3)

    return ImageTensor.from_array(img.astype(np.float32))


def synth_uniform(height: int, width: int, channels: int, seed: int) -> ImageTensor:
    """Seeded generic-position image: i.i.d. draws from the xorshift stream."""
    if height < 1 or width < 1 or channels not in (1, 3):
        raise ArgumentError(
            f"bad synthetic image shape {height}x{width}x{channels}"
        )
    rng = Xorshift64Star(seed)
    data = rng.floats(height * width * channels).reshape(height, width, channels)
    return ImageTensor.from_array(data.astype(np.float32))
