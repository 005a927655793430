"""Image representation, PPM/PGM IO, geometric transforms, 8x8 block DCT,
and the JPEG-quantization attack simulator.

All operations are pure: they never mutate their inputs and return new
images.  Channel values are always clamped back into 0..255, and every
rounding step is round-half-up (floor(x + 0.5)) so results are bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class RasterError(Exception):
    pass


class BadMagic(RasterError):
    pass


class TruncatedPayload(RasterError):
    pass


class UnsupportedMaxval(RasterError):
    pass


class ZeroOutputDimension(RasterError):
    pass


class OutOfBounds(RasterError):
    pass


class QualityOutOfRange(RasterError):
    pass


class DimensionMismatch(RasterError):
    pass


def round_half_up(x: np.ndarray | float) -> np.ndarray | float:
    return np.floor(x + 0.5)


def _clamp_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class Rect:
    """Pixel-aligned sub-rectangle (top-left x, y and extent w, h)."""

    x: int
    y: int
    w: int
    h: int


@dataclass
class Image:
    """RGB raster with an optional per-pixel coverage (alpha) plane.

    pixels has shape (h, w, 3) and dtype uint8; alpha, when present, has
    shape (h, w) and dtype uint8.
    """

    pixels: np.ndarray
    alpha: np.ndarray | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("pixels must have shape (h, w, 3) with h, w >= 1")
        object.__setattr__(self, "pixels", px)
        if self.alpha is not None:
            a = np.asarray(self.alpha, dtype=np.uint8)
            if a.shape != px.shape[:2]:
                raise ValueError("alpha shape must match pixel grid")
            object.__setattr__(self, "alpha", a)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, color=(0, 0, 0)) -> "Image":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:, :] = color
        return cls(px)

    @classmethod
    def transparent(cls, width: int, height: int) -> "Image":
        return cls(
            np.zeros((height, width, 3), dtype=np.uint8),
            np.zeros((height, width), dtype=np.uint8),
        )

    def copy(self) -> "Image":
        return Image(self.pixels.copy(), None if self.alpha is None else self.alpha.copy())

    def same_pixels(self, other: "Image") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.pixels, other.pixels))
        )


# ---------------------------------------------------------------------------
# PPM / PGM


def _read_header_tokens(data: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Read whitespace-separated integer tokens, tolerating '#' comments."""
    tokens: list[int] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] != ord("\n"):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise TruncatedPayload("header ended before all fields were read")
        tok = data[i:j]
        if not tok.isdigit():
            raise TruncatedPayload(f"expected integer header field, got {tok!r}")
        tokens.append(int(tok))
        i = j
    return tokens, i


def read_ppm(data: bytes) -> Image:
    """Decode a binary PPM ("P6") or PGM ("P5", promoted to RGB)."""
    if len(data) < 2:
        raise BadMagic("file too short for a magic number")
    magic = data[:2]
    if magic not in (b"P6", b"P5"):
        raise BadMagic(f"unsupported magic {magic!r}")
    (width, height, maxval), pos = _read_header_tokens(data, 3, 2)
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} not supported")
    if width < 1 or height < 1:
        raise TruncatedPayload("dimensions must be positive")
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise TruncatedPayload(f"expected {need} payload bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 3:
        px = arr.reshape(height, width, 3)
    else:
        px = np.repeat(arr.reshape(height, width, 1), 3, axis=2)
    return Image(px.copy())


def write_ppm(img: Image) -> bytes:
    """Encode as canonical binary PPM: "P6\\n<w> <h>\\n255\\n" + raw RGB."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


# ---------------------------------------------------------------------------
# Geometry


def scale(img: Image, factor: float) -> Image:
    """Bilinear rescale by `factor` (both axes).

    Output dimension = round(dim * factor); source coordinates are sampled at
    (dst + 0.5) / factor - 0.5 with edge clamping.
    """
    if factor <= 0:
        raise ZeroOutputDimension("scale factor must be positive")
    out_w = int(round_half_up(img.width * factor))
    out_h = int(round_half_up(img.height * factor))
    if out_w < 1 or out_h < 1:
        raise ZeroOutputDimension(f"output would be {out_w}x{out_h}")
    if factor == 1.0:
        return img.copy()

    src = img.pixels.astype(np.float64)
    sx = (np.arange(out_w) + 0.5) / factor - 0.5
    sy = (np.arange(out_h) + 0.5) / factor - 0.5
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, img.width - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, img.height - 1)
    x1 = np.clip(x0 + 1, 0, img.width - 1)
    y1 = np.clip(y0 + 1, 0, img.height - 1)
    fx = np.clip(sx - np.floor(sx), 0.0, 1.0)
    fy = np.clip(sy - np.floor(sy), 0.0, 1.0)
    # For samples clamped left of the image, floor(sx) < 0 but both taps are
    # pixel 0; zero the fraction so the edge value is returned exactly.
    fx = np.where(sx < 0, 0.0, fx)
    fy = np.where(sy < 0, 0.0, fy)

    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return Image(_clamp_u8(round_half_up(out)))


def crop(img: Image, r: Rect) -> Image:
    """Exact sub-rectangle copy; the rectangle must lie inside the image."""
    if r.w < 1 or r.h < 1 or r.x < 0 or r.y < 0 or r.x + r.w > img.width or r.y + r.h > img.height:
        raise OutOfBounds(f"rect {r} outside {img.width}x{img.height}")
    px = img.pixels[r.y : r.y + r.h, r.x : r.x + r.w].copy()
    alpha = None if img.alpha is None else img.alpha[r.y : r.y + r.h, r.x : r.x + r.w].copy()
    return Image(px, alpha)


# ---------------------------------------------------------------------------
# 8x8 orthonormal DCT-II

def _dct_matrix() -> np.ndarray:
    n = np.arange(8)
    k = n.reshape(8, 1)
    m = np.cos(np.pi * (2 * n + 1) * k / 16.0)
    m[0, :] *= math.sqrt(1.0 / 8.0)
    m[1:, :] *= math.sqrt(2.0 / 8.0)
    return m


_DCT_M = _dct_matrix()


def dct8(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of one 8x8 block."""
    b = np.asarray(block, dtype=np.float64).reshape(8, 8)
    return _DCT_M @ b @ _DCT_M.T


def idct8(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of dct8."""
    c = np.asarray(coeffs, dtype=np.float64).reshape(8, 8)
    return _DCT_M.T @ c @ _DCT_M


def dct8_batch(blocks: np.ndarray) -> np.ndarray:
    """Forward DCT of a (n, 8, 8) stack."""
    return _DCT_M[None] @ blocks @ _DCT_M.T[None]


def idct8_batch(coeffs: np.ndarray) -> np.ndarray:
    return _DCT_M.T[None] @ coeffs @ _DCT_M[None]


# ---------------------------------------------------------------------------
# Luma helpers and JPEG simulation

# ITU-T81 Annex K luminance quantization table, row-major.
JPEG_LUMA_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def luma(img: Image) -> np.ndarray:
    """BT.601 luma plane as float64: Y = 0.299 R + 0.587 G + 0.114 B."""
    px = img.pixels.astype(np.float64)
    return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]


def quant_table(quality: int) -> np.ndarray:
    """Annex K luminance table scaled to `quality` (libjpeg scaling law)."""
    if not 1 <= quality <= 100:
        raise QualityOutOfRange(f"quality {quality} outside 1..100")
    s = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    t = np.floor((JPEG_LUMA_TABLE * s + 50.0) / 100.0)
    return np.clip(t, 1, 255)


def _split_blocks(plane: np.ndarray) -> tuple[np.ndarray, int, int]:
    """(n, 8, 8) view of the full blocks of a plane, plus block-grid dims."""
    h, w = plane.shape
    by, bx = h // 8, w // 8
    trimmed = plane[: by * 8, : bx * 8]
    blocks = trimmed.reshape(by, 8, bx, 8).swapaxes(1, 2).reshape(by * bx, 8, 8)
    return blocks, bx, by


def _join_blocks(blocks: np.ndarray, bx: int, by: int) -> np.ndarray:
    return blocks.reshape(by, bx, 8, 8).swapaxes(1, 2).reshape(by * 8, bx * 8)


def apply_luma_delta(img: Image, delta: np.ndarray) -> Image:
    """Add a luma-plane delta equally to R, G and B, rounded and clamped."""
    px = img.pixels.astype(np.float64) + delta[:, :, None]
    out = Image(_clamp_u8(round_half_up(px)))
    if img.alpha is not None:
        out.alpha = img.alpha.copy()
    return out


def jpeg_attack(img: Image, quality: int) -> Image:
    """Simulate JPEG compression damage on the luma channel.

    Every 8x8 luma block (edge blocks padded by edge replication, the pad
    discarded afterwards) is transformed, divided by the quality-scaled
    Annex K table, rounded, multiplied back and inverse-transformed.  The
    resulting luma delta is applied equally to all three channels.  Chroma
    is otherwise untouched.
    """
    table = quant_table(quality)
    y = luma(img)
    h, w = y.shape
    ph, pw = ((h + 7) // 8) * 8, ((w + 7) // 8) * 8
    padded = np.pad(y, ((0, ph - h), (0, pw - w)), mode="edge")
    blocks, bx, by = _split_blocks(padded)
    coeffs = dct8_batch(blocks)
    quantized = round_half_up(coeffs / table) * table
    rebuilt = _join_blocks(idct8_batch(quantized), bx, by)[:h, :w]
    return apply_luma_delta(img, rebuilt - y)


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB over all RGB samples; inf if equal."""
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatch(f"{a.width}x{a.height} vs {b.width}x{b.height}")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)
