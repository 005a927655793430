"""Minimal lossless PNG encoder (RGB8, filter 0) for browser previews.

Only encoding is supported; PNG bytes are a convenience rendition and are
never hashed or compared by any pipeline contract.
"""

from __future__ import annotations

import struct
import zlib

from .raster import Image

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, data: bytes) -> bytes:
    body = tag + data
    return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body))


def encode_png(img: Image) -> bytes:
    ihdr = struct.pack(">IIBBBBB", img.width, img.height, 8, 2, 0, 0, 0)
    raw = bytearray()
    for row in img.pixels:
        raw.append(0)  # filter type 0
        raw.extend(row.tobytes())
    return (
        _SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(bytes(raw), 9))
        + _chunk(b"IEND", b"")
    )
