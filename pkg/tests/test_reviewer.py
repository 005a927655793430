import numpy as np
import pytest

from aegis import generator, raster, reviewer
from aegis.generator import Component, GenConfig, generate
from aegis.planner import Subtask, load_lexicon
from aegis.reviewer import Decision, EmptyComponent, ReviewPolicy, ReviewScore, gate, measure, score

from test_generator import BG, element_subtask


def sprite_component(canvas=100, size_px=10, center=(0.5, 0.5), color=(255, 0, 0), sid="st-0-x"):
    img = raster.Image.transparent(canvas, canvas)
    cx, cy = int(center[0] * canvas), int(center[1] * canvas)
    x0, y0 = cx - size_px // 2, cy - size_px // 2
    img.pixels[y0 : y0 + size_px, x0 : x0 + size_px] = color
    img.alpha[y0 : y0 + size_px, x0 : x0 + size_px] = 255
    return Component(
        subtask_id=sid,
        image=img,
        attempt=1,
        seed=0,
        measured_bbox=(x0 / canvas, y0 / canvas, size_px / canvas, size_px / canvas),
        params_used={"position": list(center)},
    )


# ---------------------------------------------------------------------------
# measure()


def test_measure_uniform_sprite():
    m = measure(sprite_component())
    assert m.mean_color == (255.0, 0.0, 0.0)
    assert m.center == (0.5, 0.5)
    assert m.area_fraction == pytest.approx(0.01)


def test_measure_centroid_of_two_blobs_is_midpoint():
    img = raster.Image.transparent(100, 100)
    for cx in (20, 80):
        img.pixels[48:52, cx - 2 : cx + 2] = (10, 10, 10)
        img.alpha[48:52, cx - 2 : cx + 2] = 255
    comp = Component("st", img, 1, 0, (0.0, 0.0, 1.0, 1.0), {"position": [0.5, 0.5]})
    m = measure(comp)
    assert m.center[0] == pytest.approx(0.5)
    assert m.center[1] == pytest.approx(0.5)


def test_measure_matches_bruteforce_scan():
    comp = generate(element_subtask("castle", size=0.4), GenConfig(96, 96, 0.0, 3), 1)
    m = measure(comp)
    # Independent per-pixel recomputation.
    total = np.zeros(3)
    count = 0
    sx = sy = 0.0
    for y in range(96):
        for x in range(96):
            if comp.image.alpha[y, x] > 0:
                total += comp.image.pixels[y, x]
                sx += x + 0.5
                sy += y + 0.5
                count += 1
    assert m.area_fraction == pytest.approx(count / 96**2)
    assert m.mean_color == pytest.approx(tuple(total / count))
    assert m.center == pytest.approx((sx / count / 96, sy / count / 96))


def test_measure_empty_component_rejected():
    img = raster.Image.transparent(32, 32)
    comp = Component("st", img, 1, 0, (0, 0, 0, 0), {})
    with pytest.raises(EmptyComponent):
        measure(comp)


# ---------------------------------------------------------------------------
# score()


def test_perfect_render_scores_one_for_every_kind():
    lex = load_lexicon()
    for kind in lex.kinds:
        st = element_subtask(kind, sid=f"st-0-{kind}")
        comp = generate(st, GenConfig(128, 128, 0.0, 11), 1)
        s = reviewer.score_component(comp, st)
        assert s.value == pytest.approx(1.0, abs=1e-12), kind
        assert set(s.parts) == {"color", "position", "size"}


def test_background_perfect_score():
    comp = generate(BG, GenConfig(64, 64, 0.0, 1), 1)
    s = reviewer.score_component(comp, BG)
    assert s.value == pytest.approx(1.0)
    assert set(s.parts) == {"color"}


def test_color_part_black_vs_white():
    st = element_subtask("sun", color=(255, 255, 255), size=0.2)
    comp = generate(st, GenConfig(100, 100, 0.0, 1), 1)
    black = Component(
        comp.subtask_id,
        raster.Image(np.zeros_like(comp.image.pixels), comp.image.alpha.copy()),
        1,
        0,
        comp.measured_bbox,
        comp.params_used,
    )
    s = reviewer.score_component(black, st)
    assert s.parts["color"] == pytest.approx(0.0, abs=1e-12)
    assert s.parts["position"] == pytest.approx(1.0)
    assert s.parts["size"] == pytest.approx(1.0)
    assert s.value == pytest.approx(2.0 / 3.0)


def test_position_part_formula_quarter_offset():
    # A sprite displaced by 0.25 canvas -> position part 1 - 0.25/0.5 = 0.5.
    st = Subtask(
        "st-0-x",
        "element",
        {"kind": "sun", "color": [255, 0, 0], "size": 0.1, "position": [0.25, 0.5]},
    )
    comp = generate(st, GenConfig(128, 128, 0.0, 1), 1)
    shifted = Subtask("st-0-x", "element", {**st.constraints, "position": [0.5, 0.5]})
    s_ref = reviewer.score_component(comp, shifted)
    expected_pos = 1.0 - min(1.0, 0.25 / 0.5)
    assert s_ref.parts["position"] == pytest.approx(expected_pos, abs=1e-3)
    hand_value = (s_ref.parts["color"] + expected_pos + s_ref.parts["size"]) / 3.0
    assert s_ref.value == pytest.approx(hand_value, abs=1e-3)


def test_size_part_is_area_ratio():
    st = element_subtask("sun", size=0.2)
    comp = generate(st, GenConfig(128, 128, 0.0, 1), 1)
    bigger = Subtask("st-0-sun", "element", {**st.constraints, "size": 0.4})
    s = reviewer.score_component(comp, bigger)
    m = measure(comp)
    _, expected_area = reviewer.reference_stats(bigger, (128, 128))
    assert s.parts["size"] == pytest.approx(m.area_fraction / expected_area)


def test_scores_always_in_unit_interval():
    st = element_subtask("dragon")
    for attempt in range(1, 40):
        comp = generate(st, GenConfig(64, 64, 1.0, seed=13), attempt)
        s = reviewer.score_component(comp, st)
        assert 0.0 <= s.value <= 1.0
        assert all(0.0 <= p <= 1.0 for p in s.parts.values())


def test_mean_score_nonincreasing_in_eta():
    # 200 seeds per eta grid point; infidelity must not help alignment.
    st = element_subtask("castle")
    means = []
    for eta in (0.0, 0.25, 0.5, 0.75, 1.0):
        vals = []
        for seed in range(200):
            comp = generate(st, GenConfig(64, 64, eta, seed=seed), 1)
            vals.append(reviewer.score_component(comp, st).value)
        means.append(float(np.mean(vals)))
    assert all(b <= a for a, b in zip(means, means[1:])), means


# ---------------------------------------------------------------------------
# gate()


def _score(value, attempt):
    return ReviewScore(value, {"color": value}, "st", attempt)


def test_gate_accepts_at_tau():
    policy = ReviewPolicy(tau=0.7, max_attempts=3)
    assert gate(_score(0.9, 1), policy) == Decision("accept")
    assert gate(_score(0.7, 1), policy) == Decision("accept")  # boundary: >= tau


def test_gate_regenerates_below_tau():
    policy = ReviewPolicy(tau=0.7, max_attempts=3)
    assert gate(_score(0.5, 1), policy) == Decision("regenerate")
    assert gate(_score(0.5, 2), policy) == Decision("regenerate")


def test_gate_exhaustion_take_best():
    policy = ReviewPolicy(tau=0.7, max_attempts=3, on_exhaust="take_best")
    assert gate(_score(0.5, 3), policy) == Decision("accept", use_best=True)


def test_gate_exhaustion_escalate():
    policy = ReviewPolicy(tau=0.7, max_attempts=3, on_exhaust="escalate")
    assert gate(_score(0.5, 3), policy) == Decision("escalate", use_best=True)


def test_gate_never_regenerates_at_max():
    for policy in (ReviewPolicy(0.9, 1, "take_best"), ReviewPolicy(0.9, 4, "escalate")):
        d = gate(_score(0.1, policy.max_attempts), policy)
        assert d.kind != "regenerate"


def test_gate_tau_zero_accepts_first():
    assert gate(_score(0.0, 1), ReviewPolicy(tau=0.0)) == Decision("accept")


def test_policy_validation():
    with pytest.raises(reviewer.ReviewerError):
        ReviewPolicy(tau=1.5)
    with pytest.raises(reviewer.ReviewerError):
        ReviewPolicy(max_attempts=0)
    with pytest.raises(reviewer.ReviewerError):
        ReviewPolicy(on_exhaust="give_up")
