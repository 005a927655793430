"""Deterministic 20-image fixture corpus: ten 512x512 composites produced by
the pipeline and ten seeded noise/texture images.

The corpus is rebuilt on demand from fixed seeds, so robustness numbers are
reproducible without shipping binary fixtures.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import orchestrator, raster

COMPOSITE_PROMPTS = [
    ("Red dragon flying above a medieval castle during a dramatic sunset", 101),
    ("blue ship below a gold sun at day", 102),
    ("green tree beside a brown house on a day", 103),
    ("white cloud above a gray mountain at night", 104),
    ("purple kite above a green hill by day", 105),
    ("silver moon above a black tower at night", 106),
    ("orange fish below a cyan wave by day", 107),
    ("yellow star above a white boat at night", 108),
    ("pink flower beside a green tree on plain", 109),
    ("crimson bird above a blue bridge at sunset", 110),
]

# (coarse grid, low, high, seed): coarse <= 48 gives smooth texture, larger
# values approach white noise so amplitude comes down to keep mid-band sane.
TEXTURE_PARAMS = [
    (16, 10, 246, 201),
    (24, 10, 246, 202),
    (32, 20, 236, 203),
    (48, 20, 236, 204),
    (64, 30, 226, 205),
    (86, 30, 226, 206),
    (128, 40, 216, 207),
    (512, 93, 163, 208),
    (512, 80, 176, 209),
    (512, 100, 156, 210),
]

SIZE = 512


def texture_image(coarse: int, lo: int, hi: int, seed: int, size: int = SIZE) -> raster.Image:
    rng = np.random.default_rng(seed)
    small = rng.integers(lo, hi, size=(coarse, coarse, 3)).astype(np.uint8)
    img = raster.Image(small)
    if coarse == size:
        return img
    return raster.scale(img, size / coarse)


def composite_image(prompt: str, seed: int, size: int = SIZE) -> raster.Image:
    """Unwatermarked pipeline composite (artifact before protection)."""
    cfg = orchestrator.SessionConfig(
        mode="auto",
        eta=0.2,
        seed=seed,
        canvas_w=size,
        canvas_h=size,
        fixed_clock=1_700_000_000,
    )
    session = orchestrator.run(orchestrator.start_session(prompt, cfg))
    return session.composite_image


def build_corpus(directory: str | Path, size: int = SIZE) -> list[Path]:
    """Write the 20 fixtures as PPM files; returns their paths in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for i, (prompt, seed) in enumerate(COMPOSITE_PROMPTS):
        path = directory / f"composite_{i:02d}.ppm"
        if not path.exists():
            path.write_bytes(raster.write_ppm(composite_image(prompt, seed, size)))
        paths.append(path)
    for i, (coarse, lo, hi, seed) in enumerate(TEXTURE_PARAMS):
        path = directory / f"texture_{i:02d}.ppm"
        if not path.exists():
            scaled_coarse = coarse if coarse != SIZE else size
            path.write_bytes(
                raster.write_ppm(texture_image(scaled_coarse, lo, hi, seed, size))
            )
        paths.append(path)
    return paths


def load_corpus(directory: str | Path, size: int = SIZE) -> list[tuple[str, raster.Image]]:
    return [
        (p.stem, raster.read_ppm(p.read_bytes())) for p in build_corpus(directory, size)
    ]
