"""Deterministic synthetic ground truth: roads, lane dividers, crossings.

Every road in a scene is a parallel offset of one reference centerline (a
line or circular arc), so boundaries and dividers never cross each other.
Elements are clipped to the perception window and simplified with RDP.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from .geometry import MIN_EDGE, GeometryError, Polyline, arc_length, rdp_simplify
from .hsmr import ElementCategory, MapElement
from .matching import GroundTruthSet

MAX_CURVATURE = 0.05
MIN_FRAGMENT = 1.0
RDP_EPSILON = 0.05


@dataclass(frozen=True)
class PerceptionRange:
    x: tuple[float, float] = (-15.0, 15.0)
    y: tuple[float, float] = (-30.0, 30.0)

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if not (x[0] < x[1] and y[0] < y[1]):
            raise ValueError(f"empty perception range x={x} y={y}")

    @classmethod
    def regular(cls) -> PerceptionRange:
        return cls((-15.0, 15.0), (-30.0, 30.0))

    @classmethod
    def long(cls) -> PerceptionRange:
        return cls((-15.0, 15.0), (-60.0, 60.0))

    @classmethod
    def named(cls, name: str) -> PerceptionRange:
        try:
            return {"regular": cls.regular, "long": cls.long}[name]()
        except KeyError:
            raise ValueError(f"unknown range {name!r}; expected 'regular' or 'long'") from None

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] >= self.x[0] - tol)
            & (pts[:, 0] <= self.x[1] + tol)
            & (pts[:, 1] >= self.y[0] - tol)
            & (pts[:, 1] <= self.y[1] + tol)
        )

    def to_dict(self) -> dict:
        return {"x": list(self.x), "y": list(self.y)}


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    road_count: int = 1
    lanes_per_road: int = 3
    curvature_range: tuple[float, float] = (-0.02, 0.02)
    crossing_count: int = 1
    jitter: float = 0.0
    lane_width: float = 3.5
    heading_spread: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "curvature_range", tuple(float(k) for k in self.curvature_range))
        lo, hi = self.curvature_range
        if lo > hi:
            raise ValueError("curvature_range must be (min, max)")
        if max(abs(lo), abs(hi)) > MAX_CURVATURE:
            raise ValueError(f"|curvature| must be <= {MAX_CURVATURE} /m")
        if min(self.road_count, self.lanes_per_road, self.crossing_count) < 0:
            raise ValueError("counts must be non-negative")
        if self.road_count and self.lanes_per_road < 1:
            raise ValueError("roads need at least one lane")
        if self.jitter < 0 or self.lane_width <= 0:
            raise ValueError("jitter must be >= 0 and lane_width > 0")


# -- clipping ------------------------------------------------------------------


def _dedupe(v: np.ndarray, closed: bool) -> np.ndarray:
    keep = [0]
    for i in range(1, len(v)):
        if np.hypot(*(v[i] - v[keep[-1]])) > MIN_EDGE:
            keep.append(i)
    v = v[keep]
    if closed and len(v) > 1 and np.hypot(*(v[-1] - v[0])) <= MIN_EDGE:
        v = v[:-1]
    return v


def _clip_open(v: np.ndarray, rng: PerceptionRange) -> list[np.ndarray]:
    lo = np.array([rng.x[0], rng.y[0]])
    hi = np.array([rng.x[1], rng.y[1]])
    fragments: list[list[np.ndarray]] = []
    current: list[np.ndarray] | None = None
    for a, b in zip(v[:-1], v[1:]):
        d = b - a
        t0, t1 = 0.0, 1.0
        visible = True
        for axis in (0, 1):
            for p, q in ((-d[axis], a[axis] - lo[axis]), (d[axis], hi[axis] - a[axis])):
                if p == 0:
                    if q < 0:
                        visible = False
                    continue
                r = q / p
                if p < 0:
                    t0 = max(t0, r)
                else:
                    t1 = min(t1, r)
        if not visible or t0 > t1:
            current = None
            continue
        start = np.clip(a + t0 * d, lo, hi)
        end = np.clip(a + t1 * d, lo, hi)
        if current is None or t0 > 0:
            current = [start]
            fragments.append(current)
        current.append(end)
        if t1 < 1:
            current = None
    return [np.array(f) for f in fragments]


def _clip_polygon(v: np.ndarray, rng: PerceptionRange) -> np.ndarray:
    # Sutherland-Hodgman against the four half-planes; crossings snap onto the border.
    planes = [(0, rng.x[0], 1), (0, rng.x[1], -1), (1, rng.y[0], 1), (1, rng.y[1], -1)]
    pts = [p for p in v]
    for axis, bound, sign in planes:
        if not pts:
            break
        out = []
        for i, cur in enumerate(pts):
            prev = pts[i - 1]
            cur_in = sign * (cur[axis] - bound) >= 0
            prev_in = sign * (prev[axis] - bound) >= 0
            if cur_in != prev_in:
                t = (bound - prev[axis]) / (cur[axis] - prev[axis])
                x = prev + t * (cur - prev)
                x[axis] = bound
                out.append(x)
            if cur_in:
                out.append(cur)
        pts = out
    return np.array(pts).reshape(-1, 2)


def clip_element(e: MapElement, rng: PerceptionRange) -> list[MapElement]:
    """Clip one element; open elements may split, fragments under 1 m are dropped."""
    shape = e.shape
    if shape.closed:
        pieces = [_dedupe(_clip_polygon(shape.vertices, rng), True)]
    else:
        pieces = [_dedupe(f, False) for f in _clip_open(shape.vertices, rng)]
    out = []
    for piece in pieces:
        if len(piece) < (3 if shape.closed else 2):
            continue
        try:
            poly = Polyline(piece, shape.closed)
        except GeometryError:
            continue
        if arc_length(poly) < MIN_FRAGMENT:
            continue
        out.append(MapElement(e.category, poly, e.confidence))
    return out


def clip_to_range(gts: GroundTruthSet | Iterable[MapElement], rng: PerceptionRange) -> GroundTruthSet:
    out = []
    for e in gts:
        if e.is_padding:
            continue
        if np.all(rng.contains(e.shape.vertices, tol=0.0)):
            out.append(e)
        else:
            out.extend(clip_element(e, rng))
    return GroundTruthSet(tuple(out))


# -- generation ----------------------------------------------------------------


def _reference_curve(x_mid: float, heading: float, kappa: float, s: np.ndarray):
    """Points, unit tangents and left normals of a line/arc through (x_mid, 0)."""
    theta = heading + kappa * s
    if abs(kappa) < 1e-12:
        x = x_mid + s * math.cos(heading)
        y = s * math.sin(heading)
    else:
        x = x_mid + (np.sin(theta) - math.sin(heading)) / kappa
        y = -(np.cos(theta) - math.cos(heading)) / kappa
    tangent = np.column_stack([np.cos(theta), np.sin(theta)])
    normal = np.column_stack([-np.sin(theta), np.cos(theta)])
    return np.column_stack([x, y]), tangent, normal


def generate_scene(spec: SceneSpec, rng: PerceptionRange = PerceptionRange()) -> GroundTruthSet:
    """Build a scene from ``spec``; a pure function of ``(spec, rng)``."""
    gen = np.random.default_rng(spec.seed)
    elements: list[MapElement] = []
    if spec.road_count == 0:
        return GroundTruthSet(())

    kappa = float(gen.uniform(*spec.curvature_range))
    heading = math.pi / 2 + float(gen.uniform(-spec.heading_spread, spec.heading_spread))
    x_mid = float(gen.uniform(-0.1, 0.1) * (rng.x[1] - rng.x[0]))
    half = 0.5 * max(rng.y[1] - rng.y[0], rng.x[1] - rng.x[0]) + 10.0
    if abs(kappa) > 1e-12:
        # keep the sweep below a half turn
        half = min(half, 0.45 * math.pi / abs(kappa))
    s = np.arange(-half, half + 1e-9, 0.25)
    centre, tangent, normal = _reference_curve(x_mid, heading, kappa, s)

    width = spec.lanes_per_road * spec.lane_width
    gap = 1.0
    offsets = (np.arange(spec.road_count) - (spec.road_count - 1) / 2) * (width + gap)

    def offset_line(o: float) -> np.ndarray:
        pts = centre + o * normal
        if spec.jitter:
            pts = pts + gen.normal(0.0, spec.jitter, pts.shape)
        return pts

    for c in offsets:
        lines = [(ElementCategory.BOUNDARY, c - width / 2), (ElementCategory.BOUNDARY, c + width / 2)]
        lines += [(ElementCategory.DIVIDER, c - width / 2 + k * spec.lane_width) for k in range(1, spec.lanes_per_road)]
        for category, o in lines:
            for frag in clip_element(MapElement(category, Polyline(offset_line(o))), rng):
                elements.append(MapElement(category, rdp_simplify(frag.shape, RDP_EPSILON)))

    for _ in range(spec.crossing_count):
        road = int(gen.integers(spec.road_count))
        along = float(gen.uniform(3.0, 5.0))
        for _attempt in range(20):
            i = int(gen.integers(len(s)))
            if rng.contains(centre[i] + offsets[road] * normal[i])[0]:
                break
        p = centre[i] + offsets[road] * normal[i]
        t, n = tangent[i], normal[i]
        across = (width + 1.0) / 2
        corners = np.array(
            [p - across * n - along / 2 * t, p - across * n + along / 2 * t, p + across * n + along / 2 * t, p + across * n - along / 2 * t]
        )
        for frag in clip_element(MapElement(ElementCategory.PED_CROSSING, Polyline(corners, True)), rng):
            elements.append(MapElement(ElementCategory.PED_CROSSING, rdp_simplify(frag.shape, RDP_EPSILON)))
    return GroundTruthSet(tuple(elements))


# -- suites --------------------------------------------------------------------


@dataclass(frozen=True)
class Suite:
    name: str
    seeds: tuple[int, ...]
    spec: SceneSpec
    range: PerceptionRange

    def scenes(self) -> list[GroundTruthSet]:
        return [generate_scene(self.spec_for(seed), self.range) for seed in self.seeds]

    def spec_for(self, seed: int) -> SceneSpec:
        params = asdict(self.spec)
        params["seed"] = seed
        return SceneSpec(**params)


def load_suite(name: str = "standard", range_name: str = "regular") -> Suite:
    """Pinned acceptance suite from the bundled manifest."""
    manifest = json.loads(resources.files("vecmap").joinpath("suites.json").read_text())
    entry = manifest[name]
    return Suite(name, tuple(entry["seeds"]), SceneSpec(**entry["spec"]), PerceptionRange.named(range_name))
