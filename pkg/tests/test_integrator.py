import numpy as np
import pytest

from aegis import integrator, raster
from aegis.generator import Component
from aegis.integrator import composite, overlap_over_smaller, resolve_layout

from test_reviewer import sprite_component


def box_component(center, frac, sid, canvas=100):
    """Square sprite of side `frac` (canvas fraction) centered at `center`."""
    return sprite_component(
        canvas=canvas, size_px=int(frac * canvas), center=center, sid=sid
    )


# ---------------------------------------------------------------------------
# Oracle: solve overlap(d) = theta by bisection, independent of the
# closed-form displacement used in production.


def oracle_displacement(a_box, b_box, theta, axis, direction):
    def overlap_after(d):
        bx, by, bw, bh = b_box
        moved = (bx + d * direction, by, bw, bh) if axis == "x" else (bx, by + d * direction, bw, bh)
        return overlap_over_smaller(a_box, moved)

    lo, hi = 0.0, 2.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if overlap_after(mid) > theta:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def test_disjoint_components_zero_displacement():
    a = box_component((0.25, 0.25), 0.2, "st-0-a")
    b = box_component((0.75, 0.75), 0.2, "st-1-b")
    placements = resolve_layout([a, b], (100, 100), theta=0.3)
    assert all(p.displaced_by == (0.0, 0.0) for p in placements)
    assert [p.z for p in placements] == [0, 1]


def test_concentric_boxes_shift_matches_bisection_oracle():
    theta = 0.3
    a = box_component((0.5, 0.5), 0.2, "st-0-a")
    b = box_component((0.5, 0.5), 0.2, "st-1-b")
    placements = resolve_layout([a, b], (1000, 1000), theta=theta)
    moved = placements[1]
    # Identical concentric boxes: equal displacement either axis, tie -> y.
    assert moved.displaced_by[0] == pytest.approx(0.0)
    dy = abs(moved.displaced_by[1])
    expected = oracle_displacement(
        (0.4, 0.4, 0.2, 0.2), (0.4, 0.4, 0.2, 0.2), theta, "y", 1.0
    )
    assert dy == pytest.approx(expected, abs=1e-9)
    after = overlap_over_smaller(
        (0.4, 0.4, 0.2, 0.2), (0.4, 0.4 + dy, 0.2, 0.2)
    )
    assert after == pytest.approx(theta, abs=1e-9)


def test_offset_boxes_pick_cheaper_axis():
    theta = 0.2
    a = box_component((0.5, 0.5), 0.3, "st-0-a")
    b = box_component((0.62, 0.5), 0.3, "st-1-b")  # already separated in x
    placements = resolve_layout([a, b], (1000, 1000), theta=theta)
    moved = placements[1]
    assert moved.displaced_by[1] == pytest.approx(0.0)  # x needs less shift
    assert moved.displaced_by[0] > 0  # pushed away from the earlier box
    a_box = (0.35, 0.35, 0.3, 0.3)
    b_box = (0.47 + moved.displaced_by[0], 0.35, 0.3, 0.3)
    assert overlap_over_smaller(a_box, b_box) == pytest.approx(theta, abs=1e-9)


def test_theta_one_never_shifts():
    a = box_component((0.5, 0.5), 0.3, "st-0-a")
    b = box_component((0.5, 0.5), 0.3, "st-1-b")
    placements = resolve_layout([a, b], (100, 100), theta=1.0)
    assert placements[1].displaced_by == (0.0, 0.0)


def test_resolution_clamps_and_reports_unresolvable():
    # Huge identical boxes: the needed shift runs off canvas.
    a = box_component((0.5, 0.5), 0.9, "st-0-a")
    b = box_component((0.5, 0.5), 0.9, "st-1-b")
    placements = resolve_layout([a, b], (100, 100), theta=0.05)
    assert placements[1].resolved is False
    x, y = placements[1].final_center
    assert 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0


def test_pairwise_overlap_bounded_after_resolution():
    canvas = (200, 200)
    comps = [
        box_component((0.4 + 0.05 * i, 0.45 + 0.03 * i), 0.25, f"st-{i}-c", canvas=200)
        for i in range(4)
    ]
    theta = 0.3
    placements = resolve_layout(comps, canvas, theta=theta)
    slack = 1.0 / 200
    boxes = []
    for comp, pl in zip(comps, placements):
        bx, by, bw, bh = comp.measured_bbox
        ox, oy = comp.params_used["position"]
        boxes.append((bx + pl.final_center[0] - ox, by + pl.final_center[1] - oy, bw, bh))
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if placements[j].resolved:
                assert overlap_over_smaller(boxes[i], boxes[j]) <= theta + slack


def test_full_canvas_component_takes_z_zero():
    bg = Component(
        "st-2-background",
        raster.Image(
            np.zeros((50, 50, 3), dtype=np.uint8), np.full((50, 50), 255, dtype=np.uint8)
        ),
        1,
        0,
        (0.0, 0.0, 1.0, 1.0),
        {"style": "plain"},
    )
    el = box_component((0.5, 0.5), 0.2, "st-0-a", canvas=50)
    placements = resolve_layout([el, bg], (50, 50), theta=0.3)
    by_id = {p.subtask_id: p for p in placements}
    assert by_id["st-2-background"].z == 0
    assert by_id["st-0-a"].z == 1
    assert by_id["st-0-a"].displaced_by == (0.0, 0.0)  # background never conflicts


# ---------------------------------------------------------------------------
# composite()


def test_opaque_sprite_replaces_background_inside_bbox():
    el = box_component((0.5, 0.5), 0.2, "st-0-a")
    placements = resolve_layout([el], (100, 100), theta=0.3)
    out = composite((7, 8, 9), placements, [el], (100, 100)).image
    assert tuple(out.pixels[50, 50]) == (255, 0, 0)
    assert tuple(out.pixels[5, 5]) == (7, 8, 9)


def test_fully_transparent_component_is_identity():
    img = raster.Image.transparent(40, 40)
    ghost = Component("st-0-g", img, 1, 0, (0.4, 0.4, 0.2, 0.2), {"position": [0.5, 0.5]})
    placements = [integrator.Placement("st-0-g", (0.5, 0.5), 0)]
    out = composite((10, 20, 30), placements, [ghost], (40, 40)).image
    assert np.all(out.pixels.reshape(-1, 3) == (10, 20, 30))


def test_half_alpha_blend_formula():
    img = raster.Image.transparent(10, 10)
    img.pixels[:, :] = (200, 200, 200)
    img.alpha[:, :] = 128
    comp = Component("st-0-h", img, 1, 0, (0.0, 0.0, 1.0, 1.0), {"position": [0.5, 0.5]})
    placements = [integrator.Placement("st-0-h", (0.5, 0.5), 0)]
    out = composite((0, 0, 0), placements, [comp], (10, 10)).image
    expected = int(np.floor(200 * (128 / 255) + 0 * (1 - 128 / 255) + 0.5))
    assert np.all(out.pixels.reshape(-1, 3) == expected)


def test_composite_applies_displacement_shift():
    el = box_component((0.5, 0.5), 0.2, "st-0-a")
    moved = [integrator.Placement("st-0-a", (0.7, 0.5), 0, displaced_by=(0.2, 0.0))]
    out = composite((0, 0, 0), moved, [el], (100, 100)).image
    assert tuple(out.pixels[50, 70]) == (255, 0, 0)
    assert tuple(out.pixels[50, 50]) == (0, 0, 0)


def test_composite_missing_component():
    with pytest.raises(integrator.MissingComponent):
        composite((0, 0, 0), [integrator.Placement("st-9-z", (0.5, 0.5), 0)], [], (10, 10))


def test_harmonize_luma_bounded_shift():
    bg = Component(
        "st-2-background",
        raster.Image(np.full((50, 50, 3), 200, dtype=np.uint8), np.full((50, 50), 255, dtype=np.uint8)),
        1, 0, (0.0, 0.0, 1.0, 1.0), {"style": "plain"},
    )
    dark = box_component((0.5, 0.5), 0.2, "st-0-a", canvas=50)
    dark.image.pixels[dark.image.alpha > 0] = (10, 10, 10)
    out = integrator.harmonize_luma(dark, bg, limit=16.0)
    mask = out.image.alpha > 0
    assert np.all(out.image.pixels[mask] == 26)  # clamped to the +16 limit
    assert np.array_equal(out.image.alpha, dark.image.alpha)
    # Untouched pixels outside the element stay transparent black.
    assert not out.image.pixels[~mask].any()


def test_harmonize_luma_small_gap_closes_fully():
    bg = Component(
        "st-2-background",
        raster.Image(np.full((50, 50, 3), 105, dtype=np.uint8), np.full((50, 50), 255, dtype=np.uint8)),
        1, 0, (0.0, 0.0, 1.0, 1.0), {"style": "plain"},
    )
    el = box_component((0.5, 0.5), 0.2, "st-0-a", canvas=50)
    el.image.pixels[el.image.alpha > 0] = (100, 100, 100)
    out = integrator.harmonize_luma(el, bg, limit=16.0)
    assert np.all(out.image.pixels[out.image.alpha > 0] == 105)


def test_composite_deterministic():
    a = box_component((0.45, 0.5), 0.3, "st-0-a")
    b = box_component((0.55, 0.5), 0.3, "st-1-b")
    canvas = (100, 100)
    one = composite((1, 2, 3), resolve_layout([a, b], canvas, 0.3), [a, b], canvas).image
    two = composite((1, 2, 3), resolve_layout([a, b], canvas, 0.3), [a, b], canvas).image
    assert one.same_pixels(two)
