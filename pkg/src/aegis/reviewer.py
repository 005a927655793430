"""Deterministic review scoring and the accept/regenerate/escalate gate.

The alignment score is an attribute-matching proxy in [0, 1]: measured
color, position and size are compared against what a noise-free render of
the same constraints would produce, so a perfect render scores exactly 1.
A pluggable scorer with the same (component, subtask) -> score contract can
replace this proxy without touching the gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import generator
from .generator import Component, GenConfig
from .planner import Subtask


class ReviewerError(Exception):
    pass


class EmptyComponent(ReviewerError):
    pass


@dataclass(frozen=True)
class MeasuredAttributes:
    mean_color: tuple[float, float, float]
    center: tuple[float, float]  # alpha centroid in canvas fractions
    area_fraction: float
    canvas: tuple[int, int]
    top_row_mean: tuple[float, float, float]
    bottom_row_mean: tuple[float, float, float]


@dataclass(frozen=True)
class ReviewScore:
    value: float
    parts: dict[str, float]
    subtask_id: str
    attempt: int


@dataclass(frozen=True)
class ReviewPolicy:
    tau: float = 0.70
    max_attempts: int = 3
    on_exhaust: str = "take_best"  # take_best | escalate

    def __post_init__(self):
        if not (0.0 <= self.tau <= 1.0):
            raise ReviewerError(f"tau {self.tau} outside [0, 1]")
        if self.max_attempts < 1:
            raise ReviewerError("max_attempts must be >= 1")
        if self.on_exhaust not in ("take_best", "escalate"):
            raise ReviewerError(f"unknown on_exhaust {self.on_exhaust!r}")


@dataclass(frozen=True)
class Decision:
    kind: str  # accept | regenerate | escalate
    use_best: bool = False


def measure(component: Component) -> MeasuredAttributes:
    """Exact pixel statistics of a component's opaque region."""
    img = component.image
    alpha = img.alpha
    if alpha is None or not alpha.any():
        raise EmptyComponent(component.subtask_id)
    mask = alpha > 0
    px = img.pixels.astype(np.float64)
    mean_color = tuple(float(c) for c in px[mask].mean(axis=0))
    ys, xs = np.nonzero(mask)
    h, w = alpha.shape
    center = (float((xs + 0.5).mean() / w), float((ys + 0.5).mean() / h))
    area = float(mask.sum() / (w * h))
    return MeasuredAttributes(
        mean_color=mean_color,
        center=center,
        area_fraction=area,
        canvas=(w, h),
        top_row_mean=tuple(float(c) for c in px[0].mean(axis=0)),
        bottom_row_mean=tuple(float(c) for c in px[h - 1].mean(axis=0)),
    )


_REFERENCE_CACHE: dict = {}


def reference_stats(t: Subtask, canvas: tuple[int, int]) -> tuple[tuple[float, float], float]:
    """(expected centroid, expected area fraction) for a noise-free render.

    Computed by rasterizing the constraint glyph through the same pipeline
    the generator uses, so a zero-noise component matches it exactly
    (including edge clipping and pixel quantization).
    """
    c = t.constraints
    key = (c["kind"], c["size"], tuple(c["position"]), canvas)
    if key not in _REFERENCE_CACHE:
        cfg = GenConfig(canvas_w=canvas[0], canvas_h=canvas[1], eta=0.0, seed=0)
        ref = generator.generate(t, cfg, attempt=1)
        m = measure(ref)
        _REFERENCE_CACHE[key] = (m.center, m.area_fraction)
    return _REFERENCE_CACHE[key]


def _color_part(measured, target) -> float:
    dist = math.sqrt(sum((m - t) ** 2 for m, t in zip(measured, target)))
    return 1.0 - dist / (255.0 * math.sqrt(3.0))


def score(m: MeasuredAttributes, t: Subtask) -> ReviewScore:
    """Alignment of measured attributes with the subtask constraints."""
    parts: dict[str, float] = {}
    if t.kind == "background":
        top = _color_part(m.top_row_mean, t.constraints["top_color"])
        bottom = _color_part(m.bottom_row_mean, t.constraints["bottom_color"])
        parts["color"] = (top + bottom) / 2.0
    elif t.kind == "element":
        parts["color"] = _color_part(m.mean_color, t.constraints["color"])
        expected_center, expected_area = reference_stats(t, m.canvas)
        dist = math.dist(m.center, expected_center)
        parts["position"] = 1.0 - min(1.0, dist / 0.5)
        a, ta = m.area_fraction, expected_area
        parts["size"] = min(a, ta) / max(a, ta) if max(a, ta) > 0 else 1.0
    else:
        raise ReviewerError(f"cannot score subtask kind {t.kind!r}")
    parts = {k: min(1.0, max(0.0, v)) for k, v in parts.items()}
    value = sum(parts.values()) / len(parts)
    return ReviewScore(value=value, parts=parts, subtask_id=t.id, attempt=-1)


def score_component(component: Component, t: Subtask) -> ReviewScore:
    s = score(measure(component), t)
    return ReviewScore(s.value, s.parts, s.subtask_id, component.attempt)


def gate(s: ReviewScore, policy: ReviewPolicy) -> Decision:
    """Algorithm: accept at or above tau, regenerate while attempts remain,
    otherwise fall back to the exhaustion policy."""
    if s.attempt > policy.max_attempts:
        raise ReviewerError(f"attempt {s.attempt} exceeds max_attempts {policy.max_attempts}")
    if s.value >= policy.tau:
        return Decision("accept")
    if s.attempt < policy.max_attempts:
        return Decision("regenerate")
    if policy.on_exhaust == "take_best":
        return Decision("accept", use_best=True)
    return Decision("escalate", use_best=True)
