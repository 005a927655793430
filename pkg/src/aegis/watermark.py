"""Blind additive spread-spectrum watermark in mid-band 8x8 DCT coefficients.

Payload: 64 bits = 48-bit identity (truncated SHA-256 over canonical account,
project, session and timestamp metadata) plus CRC-16/CCITT-FALSE.

Embedding tiles the payload over the block grid: the block at grid position
(bx, by) carries bit (by mod 8)*8 + (bx mod 8), so the pattern repeats every
64x64 pixels and survives cropping.  Each bit has a fixed 12-chip {-1,+1}
sequence drawn from a keyed SplitMix64 stream; the chips are added to the 12
mid-band coefficients scaled by the strength lambda.

Detection is blind: correlate every candidate alignment (rescale factor,
pixel offset 0..7 on each axis, and the payload's cyclic block rotation) and
accept the first whose decoded bits pass the CRC.  Scan order is fixed:
scale-major, then dy, then dx; per pixel offset only the rotation with the
highest mean |correlation| is CRC-tested, which keeps the false-positive
budget at one CRC trial per offset.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import raster
from .provenance import canonical_serialize
from .prng import SplitMix64, mix64


class WatermarkError(Exception):
    pass


class EmptyIdentifier(WatermarkError):
    pass


class ImageTooSmall(WatermarkError):
    pass


class LengthMismatch(WatermarkError):
    pass


# The 12 mid-band coefficient positions {(u, v): 2 <= u+v <= 4}, in
# lexicographic order; chip j always modulates band position j.
BAND = tuple(
    (u, v) for u in range(5) for v in range(5) if 2 <= u + v <= 4
)
_BAND_U = np.array([u for u, _ in BAND])
_BAND_V = np.array([v for _, v in BAND])

PAYLOAD_BITS = 64
ID_BITS = 48


def crc16_ccitt(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021 if crc & 0x8000 else crc << 1) & 0xFFFF
    return crc


def _bytes_to_bits(data: bytes) -> tuple[int, ...]:
    return tuple((byte >> (7 - i)) & 1 for byte in data for i in range(8))


def _bits_to_bytes(bits) -> bytes:
    out = bytearray()
    for i in range(0, len(bits), 8):
        byte = 0
        for b in bits[i : i + 8]:
            byte = (byte << 1) | int(b)
        out.append(byte)
    return bytes(out)


@dataclass(frozen=True)
class WatermarkPayload:
    id48: bytes  # 6 bytes
    crc16: int
    bits: tuple[int, ...]  # 64 bits, id then crc, MSB first

    def hex(self) -> str:
        return (self.id48 + self.crc16.to_bytes(2, "big")).hex()

    def crc_valid(self) -> bool:
        return crc16_ccitt(self.id48) == self.crc16


def build_payload(account_id: str, project_id: str, session_id: str, created_at: int) -> WatermarkPayload:
    """64-bit identity payload tied to account/project/session metadata."""
    for name, value in (
        ("account_id", account_id),
        ("project_id", project_id),
        ("session_id", session_id),
    ):
        if not value:
            raise EmptyIdentifier(name)
    digest = hashlib.sha256(
        canonical_serialize(
            {
                "account_id": account_id,
                "project_id": project_id,
                "session_id": session_id,
                "created_at": int(created_at),
            }
        )
    ).digest()
    id48 = digest[:6]
    crc = crc16_ccitt(id48)
    return WatermarkPayload(id48, crc, _bytes_to_bits(id48 + crc.to_bytes(2, "big")))


def payload_from_bits(bits) -> WatermarkPayload:
    if len(bits) != PAYLOAD_BITS:
        raise LengthMismatch(f"need {PAYLOAD_BITS} bits, got {len(bits)}")
    data = _bits_to_bytes(bits)
    return WatermarkPayload(data[:6], int.from_bytes(data[6:8], "big"), tuple(int(b) for b in bits))


def payload_from_hex(text: str) -> WatermarkPayload:
    data = bytes.fromhex(text)
    if len(data) != 8:
        raise LengthMismatch("payload hex must encode exactly 8 bytes")
    return payload_from_bits(_bytes_to_bits(data))


@dataclass(frozen=True)
class WatermarkConfig:
    lam: float = 4.0  # embedding strength in DCT-coefficient units
    key: int = 0x13572468ACE13579
    candidate_scales: tuple[float, ...] = (1.0, 2.0)

    def __post_init__(self):
        if self.lam <= 0:
            raise WatermarkError("lambda must be positive")


@dataclass(frozen=True)
class DetectionResult:
    payload_bits: tuple[int, ...]
    crc_ok: bool
    sync: tuple[int, int]  # (dx, dy) pixel offset of the block grid, 0..7
    scale_used: float
    confidence: float  # mean |correlation| per chip
    rotation: tuple[int, int]  # payload tile rotation in blocks, 0..7
    recovery_rate: float | None = None

    def payload(self) -> WatermarkPayload:
        return payload_from_bits(self.payload_bits)


def chip_matrix(key: int) -> np.ndarray:
    """(64, 12) matrix of {-1,+1} chips; row k is the sequence for bit k."""
    chips = np.empty((PAYLOAD_BITS, len(BAND)), dtype=np.float64)
    for k in range(PAYLOAD_BITS):
        stream = SplitMix64(mix64(key, k))
        chips[k] = [stream.next_sign() for _ in range(len(BAND))]
    return chips


def _block_bit_indices(bx_count: int, by_count: int) -> np.ndarray:
    by_idx, bx_idx = np.meshgrid(np.arange(by_count), np.arange(bx_count), indexing="ij")
    return ((by_idx % 8) * 8 + (bx_idx % 8)).reshape(-1)


def embed(img: raster.Image, payload: WatermarkPayload, cfg: WatermarkConfig) -> raster.Image:
    """Embed the payload; returns a new image, luma delta applied to RGB."""
    if img.width < 64 or img.height < 64:
        raise ImageTooSmall(f"{img.width}x{img.height} < 64x64")
    y = raster.luma(img)
    h, w = y.shape
    bx_count, by_count = w // 8, h // 8
    usable = y[: by_count * 8, : bx_count * 8]
    blocks = usable.reshape(by_count, 8, bx_count, 8).swapaxes(1, 2).reshape(-1, 8, 8)
    coeffs = raster.dct8_batch(blocks)

    chips = chip_matrix(cfg.key)
    k_of_block = _block_bit_indices(bx_count, by_count)
    signs = np.where(np.array(payload.bits) == 1, 1.0, -1.0)
    delta = cfg.lam * signs[k_of_block][:, None] * chips[k_of_block]  # (n, 12)
    coeffs[:, _BAND_U, _BAND_V] += delta

    rebuilt = raster.idct8_batch(coeffs)
    new_y = rebuilt.reshape(by_count, bx_count, 8, 8).swapaxes(1, 2).reshape(by_count * 8, bx_count * 8)
    delta_plane = np.zeros_like(y)
    delta_plane[: by_count * 8, : bx_count * 8] = new_y - usable
    return raster.apply_luma_delta(img, delta_plane)


_ROT = np.arange(PAYLOAD_BITS)
_ROT_Y, _ROT_X = np.divmod(_ROT, 8)
_K = np.arange(PAYLOAD_BITS)
_ROWS = (_K[None, :] // 8 - _ROT_Y[:, None]) % 8  # (rotation, bit) -> class row
_COLS = (_K[None, :] % 8 - _ROT_X[:, None]) % 8


def _correlate(plane: np.ndarray, chips: np.ndarray) -> tuple[np.ndarray, int] | None:
    """Per-class correlation sums S[class_y, class_x, bit] for one alignment."""
    h, w = plane.shape
    bx_count, by_count = w // 8, h // 8
    if bx_count < 1 or by_count < 1:
        return None
    usable = plane[: by_count * 8, : bx_count * 8]
    blocks = usable.reshape(by_count, 8, bx_count, 8).swapaxes(1, 2).reshape(-1, 8, 8)
    coeffs = raster.dct8_batch(blocks)
    band = coeffs[:, _BAND_U, _BAND_V]  # (n, 12)
    corr = band @ chips.T  # (n, 64): correlation against every bit's chips
    n = corr.shape[0]
    class_y = (np.arange(n) // bx_count) % 8
    class_x = (np.arange(n) % bx_count) % 8
    sums = np.zeros((8, 8, PAYLOAD_BITS))
    np.add.at(sums, (class_y, class_x), corr)
    return sums, n


def detect(
    img: raster.Image,
    cfg: WatermarkConfig,
    reference: WatermarkPayload | None = None,
) -> DetectionResult:
    """Blind detection with sync search.

    Candidates are scanned scale-major, then dy, then dx.  Within a scale
    every pixel offset is evaluated (one CRC trial each, at its best payload
    rotation); the highest-confidence CRC pass of the earliest scale with any
    pass is returned, so the reported sync is the true grid alignment rather
    than whichever marginal neighbor decoded first.
    """
    chips = chip_matrix(cfg.key)
    best = None  # fallback: highest-confidence candidate when nothing passes
    searched = False

    for scale in cfg.candidate_scales:
        scaled = img if scale == 1.0 else raster.scale(img, scale)
        if scaled.width < 64 or scaled.height < 64:
            continue
        searched = True
        y = raster.luma(scaled)
        passed = None
        for dy in range(8):
            for dx in range(8):
                got = _correlate(y[dy:, dx:], chips)
                if got is None:
                    continue
                sums, n_blocks = got
                r_all = sums[_ROWS, _COLS, _K[None, :]]  # (64 rotations, 64 bits)
                conf_all = np.abs(r_all).mean(axis=1)
                rot = int(np.argmax(conf_all))
                r = r_all[rot]
                per_chip = len(BAND) * max(1.0, n_blocks / PAYLOAD_BITS)
                confidence = float(conf_all[rot] / per_chip)
                bits = tuple(int(v) for v in (r > 0))
                candidate = (confidence, bits, (dx, dy), scale, (_ROT_X[rot], _ROT_Y[rot]))
                if payload_from_bits(bits).crc_valid():
                    if passed is None or confidence > passed[0]:
                        passed = candidate
                elif best is None or confidence > best[0]:
                    best = candidate
        if passed is not None:
            confidence, bits, sync, scale, rot = passed
            return _result(bits, True, sync, scale, confidence, rot, reference)

    if not searched:
        raise ImageTooSmall(f"{img.width}x{img.height} too small at every candidate scale")
    confidence, bits, sync, scale, rot = best
    return _result(bits, False, sync, scale, confidence, rot, reference)


def _result(bits, crc_ok, sync, scale, confidence, rotation, reference) -> DetectionResult:
    rate = None
    if reference is not None:
        rate = recovery_rate(reference, bits)
    return DetectionResult(
        payload_bits=bits,
        crc_ok=crc_ok,
        sync=(int(sync[0]), int(sync[1])),
        scale_used=float(scale),
        confidence=confidence,
        rotation=(int(rotation[0]), int(rotation[1])),
        recovery_rate=rate,
    )


def recovery_rate(truth: WatermarkPayload, bits) -> float:
    """Fraction of payload bits recovered correctly."""
    if len(bits) != PAYLOAD_BITS:
        raise LengthMismatch(f"need {PAYLOAD_BITS} bits, got {len(bits)}")
    matches = sum(1 for a, b in zip(truth.bits, bits) if int(a) == int(b))
    return matches / PAYLOAD_BITS
