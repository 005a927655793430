"""Layout conflict resolution and alpha compositing onto the canvas.

Resolution is a single deterministic pass in draw order: background first,
then elements in plan order.  When two element boxes overlap by more than
the configured limit (intersection over the smaller box), the later one is
shifted along whichever single axis needs the smaller displacement to bring
the overlap down to exactly that limit, ties broken toward vertical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import raster
from .generator import Component


class IntegratorError(Exception):
    pass


class MissingComponent(IntegratorError):
    pass


@dataclass
class Placement:
    subtask_id: str
    final_center: tuple[float, float]
    z: int
    displaced_by: tuple[float, float] = (0.0, 0.0)
    resolved: bool = True  # False when the needed shift ran off canvas


@dataclass
class Composite:
    image: raster.Image
    placements: list[Placement]
    canvas: tuple[int, int]


def _center_of(c: Component) -> tuple[float, float]:
    if c.params_used.get("position") is not None:
        return tuple(c.params_used["position"])
    return (0.5, 0.5)


def _box_at(c: Component, center: tuple[float, float]) -> tuple[float, float, float, float]:
    """measured_bbox translated so its component center sits at `center`."""
    bx, by, bw, bh = c.measured_bbox
    ocx, ocy = _center_of(c)
    return (bx + center[0] - ocx, by + center[1] - ocy, bw, bh)


def overlap_over_smaller(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ox = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    oy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    smaller = min(aw * ah, bw * bh)
    if smaller <= 0.0:
        return 0.0
    return (ox * oy) / smaller


def _clamped_center(c: Component, center: tuple[float, float]) -> tuple[float, float]:
    """Keep the component's box on canvas (canvas is the unit square)."""
    bx, by, bw, bh = _box_at(c, center)
    dx = -bx if bx < 0 else (1.0 - (bx + bw) if bx + bw > 1.0 else 0.0)
    dy = -by if by < 0 else (1.0 - (by + bh) if by + bh > 1.0 else 0.0)
    if bw > 1.0:
        dx = -bx  # wider than canvas: pin to the left edge
    if bh > 1.0:
        dy = -by
    return (center[0] + dx, center[1] + dy)


def resolve_layout(
    components: list[Component],
    canvas: tuple[int, int],
    theta: float = 0.3,
) -> list[Placement]:
    """Assign z order and displace later elements until pairwise overlap
    (intersection over the smaller box) is at most theta."""
    placements: list[Placement] = []
    placed_boxes: list[tuple[float, float, float, float]] = []
    slack = 1.0 / max(1, min(canvas))

    z = 0
    background = [c for c in components if c.measured_bbox == (0.0, 0.0, 1.0, 1.0)]
    elements = [c for c in components if c not in background]
    for c in background:
        placements.append(Placement(c.subtask_id, _center_of(c), z))
        z += 1

    for c in elements:
        center = _center_of(c)
        original = center
        resolved = True
        for prior in placed_boxes:
            box = _box_at(c, center)
            over = overlap_over_smaller(prior, box)
            if over <= theta:
                continue
            center = _shift_for_overlap(prior, box, c, center, theta)
            center = _clamped_center(c, center)
            if overlap_over_smaller(prior, _box_at(c, center)) > theta + slack:
                resolved = False
        placements.append(
            Placement(
                c.subtask_id,
                center,
                z,
                displaced_by=(center[0] - original[0], center[1] - original[1]),
                resolved=resolved,
            )
        )
        placed_boxes.append(_box_at(c, center))
        z += 1
    return placements


def _shift_for_overlap(prior, box, c: Component, center, theta: float):
    """Solve for the single-axis displacement that lands overlap at theta."""
    ax, ay, aw, ah = prior
    bx, by, bw, bh = box
    ox = min(ax + aw, bx + bw) - max(ax, bx)
    oy = min(ay + ah, by + bh) - max(ay, by)
    smaller = min(aw * ah, bw * bh)
    target = theta * smaller
    # Shifting along x leaves oy fixed and vice versa.
    dx_needed = ox - (target / oy) if oy > 0 else 0.0
    dy_needed = oy - (target / ox) if ox > 0 else 0.0
    dir_x = 1.0 if (bx + bw / 2.0) >= (ax + aw / 2.0) else -1.0
    dir_y = 1.0 if (by + bh / 2.0) >= (ay + ah / 2.0) else -1.0
    if dx_needed < dy_needed:
        return (center[0] + dir_x * dx_needed, center[1])
    return (center[0], center[1] + dir_y * dy_needed)


def harmonize_luma(
    component: Component, background: Component, limit: float = 16.0
) -> Component:
    """Optional style pass: pull an element's mean luma toward the
    background's, shifting all channels by at most `limit` code values.
    Disabled by default in the pipeline; callers opt in explicitly."""
    mask = component.image.alpha is not None and component.image.alpha > 0
    if not np.any(mask):
        return component
    el_px = component.image.pixels.astype(np.float64)
    el_luma = float(raster.luma(component.image)[mask].mean())
    bg_luma = float(raster.luma(background.image).mean())
    delta = min(limit, max(-limit, bg_luma - el_luma))
    shifted = el_px.copy()
    shifted[mask] = el_px[mask] + delta
    out = raster.Image(
        np.clip(raster.round_half_up(shifted), 0, 255).astype(np.uint8),
        component.image.alpha.copy(),
    )
    return Component(
        subtask_id=component.subtask_id,
        image=out,
        attempt=component.attempt,
        seed=component.seed,
        measured_bbox=component.measured_bbox,
        params_used=dict(component.params_used),
    )


def composite(
    background: Component | tuple[int, int, int],
    placements: list[Placement],
    components: list[Component],
    canvas: tuple[int, int],
) -> Composite:
    """Source-over blend of all placed components, z order ascending."""
    w, h = canvas
    by_id = {c.subtask_id: c for c in components}
    if isinstance(background, Component):
        out = background.image.pixels.astype(np.float64).copy()
    else:
        out = np.empty((h, w, 3), dtype=np.float64)
        out[:, :] = background

    for pl in sorted(placements, key=lambda p: p.z):
        if pl.subtask_id not in by_id:
            raise MissingComponent(pl.subtask_id)
        comp = by_id[pl.subtask_id]
        if isinstance(background, Component) and comp is background:
            continue
        src = comp.image
        ocx, ocy = _center_of(comp)
        dx = int(raster.round_half_up((pl.final_center[0] - ocx) * w))
        dy = int(raster.round_half_up((pl.final_center[1] - ocy) * h))
        sx0, sy0 = max(0, -dx), max(0, -dy)
        dx0, dy0 = max(0, dx), max(0, dy)
        cw = min(src.width - sx0, w - dx0)
        ch = min(src.height - sy0, h - dy0)
        if cw <= 0 or ch <= 0:
            continue
        alpha = (
            src.alpha[sy0 : sy0 + ch, sx0 : sx0 + cw].astype(np.float64) / 255.0
            if src.alpha is not None
            else np.ones((ch, cw))
        )[:, :, None]
        src_px = src.pixels[sy0 : sy0 + ch, sx0 : sx0 + cw].astype(np.float64)
        region = out[dy0 : dy0 + ch, dx0 : dx0 + cw]
        out[dy0 : dy0 + ch, dx0 : dx0 + cw] = src_px * alpha + region * (1.0 - alpha)

    img = raster.Image(np.clip(raster.round_half_up(out), 0, 255).astype(np.uint8))
    return Composite(image=img, placements=list(placements), canvas=canvas)
