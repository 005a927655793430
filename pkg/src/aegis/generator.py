"""Deterministic procedural renderer: one Component per element or
background subtask.

Glyphs are unions of polygons and ellipses in a normalized [0,1]^2 box,
scan-converted at pixel centers with anti-aliasing off, so the same inputs
always rasterize to the same mask.  The attempt-specific noise stream makes
regeneration meaningful: attributes are perturbed by uniform noise scaled by
the infidelity knob eta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import raster
from .planner import Lexicon, Subtask, load_lexicon
from .prng import SplitMix64, fnv1a64, mix64


class GeneratorError(Exception):
    pass


class UnknownKind(GeneratorError):
    pass


class LayoutSubtaskNotRenderable(GeneratorError):
    pass


@dataclass(frozen=True)
class GenConfig:
    canvas_w: int = 512
    canvas_h: int = 512
    eta: float = 0.0
    seed: int = 1

    def __post_init__(self):
        if not (0.0 <= self.eta <= 1.0):
            raise GeneratorError(f"eta {self.eta} outside [0, 1]")
        if self.canvas_w < 64 or self.canvas_h < 64:
            raise GeneratorError("canvas must be at least 64x64")


@dataclass
class Component:
    subtask_id: str
    image: raster.Image  # canvas-sized, alpha plane set
    attempt: int
    seed: int
    measured_bbox: tuple[float, float, float, float]  # x, y, w, h in canvas fractions
    params_used: dict


# ---------------------------------------------------------------------------
# Scan conversion


def _polygon_mask(xs: np.ndarray, ys: np.ndarray, verts: list) -> np.ndarray:
    """Even-odd point-in-polygon test for a grid of sample points."""
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i - 1]
        x2, y2 = verts[i]
        crosses = (np.asarray(y1 > ys)) != (y2 > ys)
        if y2 != y1:
            x_int = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (xs < x_int)
    return inside


def _ellipse_mask(xs: np.ndarray, ys: np.ndarray, params: list) -> np.ndarray:
    cx, cy, rx, ry = params
    return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0


def rasterize_shapes(shapes: list[dict], target_px: int) -> np.ndarray:
    """Boolean coverage mask (target_px, target_px) of a shape union.

    Guarantees at least one covered pixel: when the grid is too coarse for
    any sample point to land inside the union (possible for thin glyphs at
    2-3 px), the pixel holding the glyph center is set.
    """
    if target_px < 1:
        raise GeneratorError("target size must be at least one pixel")
    coords = (np.arange(target_px) + 0.5) / target_px
    xs, ys = np.meshgrid(coords, coords)
    mask = np.zeros((target_px, target_px), dtype=bool)
    for shape in shapes:
        if "polygon" in shape:
            mask |= _polygon_mask(xs, ys, shape["polygon"])
        elif "ellipse" in shape:
            mask |= _ellipse_mask(xs, ys, shape["ellipse"])
        else:
            raise GeneratorError(f"unknown shape {sorted(shape)!r}")
    if not mask.any():
        mid = min(target_px - 1, target_px // 2)
        mask[mid, mid] = True
    return mask


def render_glyph(kind: str, attrs: dict, target_px: int, lexicon: Lexicon | None = None) -> raster.Image:
    """Rasterize one glyph at target_px x target_px, filled with attrs['color']."""
    lex = lexicon or load_lexicon()
    if kind not in lex.kinds:
        raise UnknownKind(f"unknown kind {kind!r}")
    mask = rasterize_shapes(lex.glyph_shapes(kind), target_px)
    img = raster.Image.transparent(target_px, target_px)
    img.pixels[mask] = attrs["color"]
    img.alpha[mask] = 255
    return img


# ---------------------------------------------------------------------------
# Noise model


def _perturb_channel(stream: SplitMix64, value: int, eta: float) -> int:
    amp = int(raster.round_half_up(eta * 128.0))
    delta = stream.next_int(-amp, amp) if amp > 0 else 0
    return int(min(255, max(0, value + delta)))


def _perturbed_params(stream: SplitMix64, constraints: dict, eta: float) -> dict:
    """Element constraints -> rendered attributes after uniform noise.

    Draw order (color r,g,b then cx,cy then size) is part of the contract:
    the same stream always yields the same attributes.
    """
    color = [_perturb_channel(stream, c, eta) for c in constraints["color"]]
    cx, cy = constraints["position"]
    if eta > 0:
        cx += (stream.next_float() * 2.0 - 1.0) * eta * 0.25
        cy += (stream.next_float() * 2.0 - 1.0) * eta * 0.25
    cx = min(1.0, max(0.0, cx))
    cy = min(1.0, max(0.0, cy))
    size = constraints["size"]
    if eta > 0:
        size *= 1.0 + (stream.next_float() * 2.0 - 1.0) * eta * 0.5
    size = min(1.0, max(1e-6, size))
    return {
        "kind": constraints["kind"],
        "color": color,
        "position": [cx, cy],
        "size": size,
    }


def _perturbed_background(stream: SplitMix64, constraints: dict, eta: float) -> dict:
    top = [_perturb_channel(stream, c, eta) for c in constraints["top_color"]]
    bottom = [_perturb_channel(stream, c, eta) for c in constraints["bottom_color"]]
    return {"style": constraints["style"], "top_color": top, "bottom_color": bottom}


def attempt_stream(cfg: GenConfig, subtask_id: str, attempt: int) -> SplitMix64:
    return SplitMix64(mix64(cfg.seed, fnv1a64(subtask_id.encode("utf-8")), attempt))


# ---------------------------------------------------------------------------
# Component generation


def gradient_image(w: int, h: int, top, bottom) -> raster.Image:
    """Vertical linear gradient top -> bottom, rounded half-up per channel."""
    t = (np.arange(h, dtype=np.float64) / (h - 1))[:, None] if h > 1 else np.zeros((1, 1))
    top_v = np.asarray(top, dtype=np.float64)
    bot_v = np.asarray(bottom, dtype=np.float64)
    rows = top_v[None, :] + (bot_v - top_v)[None, :] * t  # (h, 3)
    px = np.clip(raster.round_half_up(rows), 0, 255).astype(np.uint8)
    return raster.Image(np.repeat(px[:, None, :], w, axis=1))


def _bbox_fractions(alpha: np.ndarray, w: int, h: int) -> tuple[float, float, float, float]:
    ys, xs = np.nonzero(alpha)
    if len(xs) == 0:
        return (0.0, 0.0, 0.0, 0.0)
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    return (x0 / w, y0 / h, (x1 - x0) / w, (y1 - y0) / h)


def generate(
    subtask: Subtask,
    cfg: GenConfig,
    attempt: int,
    lexicon: Lexicon | None = None,
) -> Component:
    """Render one attempt for an element or background subtask."""
    if subtask.kind == "layout":
        raise LayoutSubtaskNotRenderable(subtask.id)
    if attempt < 1:
        raise GeneratorError("attempt numbers start at 1")
    lex = lexicon or load_lexicon()
    stream = attempt_stream(cfg, subtask.id, attempt)
    w, h = cfg.canvas_w, cfg.canvas_h

    if subtask.kind == "background":
        params = _perturbed_background(stream, subtask.constraints, cfg.eta)
        img = gradient_image(w, h, params["top_color"], params["bottom_color"])
        img.alpha = np.full((h, w), 255, dtype=np.uint8)
        bbox = (0.0, 0.0, 1.0, 1.0)
    else:
        params = _perturbed_params(stream, subtask.constraints, cfg.eta)
        target_px = max(1, int(raster.round_half_up(params["size"] * min(w, h))))
        sprite = render_glyph(params["kind"], params, target_px, lex)
        img = raster.Image.transparent(w, h)
        cx_px = params["position"][0] * w
        cy_px = params["position"][1] * h
        left = int(raster.round_half_up(cx_px - target_px / 2.0))
        top = int(raster.round_half_up(cy_px - target_px / 2.0))
        sx0, sy0 = max(0, -left), max(0, -top)
        dx0, dy0 = max(0, left), max(0, top)
        sx1 = min(target_px, w - left)
        sy1 = min(target_px, h - top)
        if sx1 > sx0 and sy1 > sy0:
            img.pixels[dy0 : dy0 + (sy1 - sy0), dx0 : dx0 + (sx1 - sx0)] = sprite.pixels[
                sy0:sy1, sx0:sx1
            ]
            img.alpha[dy0 : dy0 + (sy1 - sy0), dx0 : dx0 + (sx1 - sx0)] = sprite.alpha[
                sy0:sy1, sx0:sx1
            ]
        bbox = _bbox_fractions(img.alpha, w, h)

    return Component(
        subtask_id=subtask.id,
        image=img,
        attempt=attempt,
        seed=cfg.seed,
        measured_bbox=bbox,
        params_used=params,
    )
