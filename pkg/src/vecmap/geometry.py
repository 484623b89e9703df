"""Polyline and point primitives in the BEV plane.

All coordinates are meters in the vehicle frame. Polylines are immutable
``(n, 2)`` float64 arrays plus an open/closed flag; a closed polyline never
repeats its first vertex, the wrap edge is implicit.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MIN_EDGE = 1e-9


class GeometryError(ValueError):
    """Invalid geometric input."""


def _as_xy(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise GeometryError(f"expected an (n, 2) or (n, 3) array of points, got shape {arr.shape}")
    # z is accepted and discarded
    return np.ascontiguousarray(arr[:, :2])


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered vertex chain, optionally closed.

    Construction validates the invariants (finite coordinates, at least two
    vertices or three when closed, no zero-length edges including the wrap
    edge), so the kernels below never see degenerate edges.
    """

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = _as_xy(self.vertices)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "closed", bool(self.closed))
        min_count = 3 if self.closed else 2
        if len(v) < min_count:
            kind = "closed" if self.closed else "open"
            raise GeometryError(f"{kind} polyline needs at least {min_count} vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polyline has non-finite coordinates")
        lengths = np.hypot(*np.diff(v, axis=0).T)
        if np.any(lengths <= MIN_EDGE):
            k = int(np.argmax(lengths <= MIN_EDGE))
            raise GeometryError(f"consecutive vertices {k} and {k + 1} coincide")
        if self.closed and np.hypot(*(v[0] - v[-1])) <= MIN_EDGE:
            raise GeometryError("closed polyline repeats its first vertex")

    def __len__(self) -> int:
        return len(self.vertices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polyline):
            return NotImplemented
        return self.closed == other.closed and np.array_equal(self.vertices, other.vertices)

    def __repr__(self) -> str:
        kind = "closed" if self.closed else "open"
        return f"Polyline({kind}, {len(self)} vertices)"

    @property
    def edge_vectors(self) -> np.ndarray:
        return _edge_vectors(self.vertices, self.closed)

    def reversed(self) -> Polyline:
        return Polyline(self.vertices[::-1], self.closed)

    def shifted(self, k: int) -> Polyline:
        """Cyclic shift so that vertex ``k`` becomes vertex 0 (closed only)."""
        if not self.closed:
            raise GeometryError("cyclic shift is only defined for closed polylines")
        return Polyline(np.roll(self.vertices, -k, axis=0), True)


@dataclass(frozen=True)
class Segment:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)[:2]
        b = np.asarray(self.b, dtype=np.float64)[:2]
        if np.hypot(*(b - a)) <= MIN_EDGE:
            raise GeometryError("degenerate segment")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def vector(self) -> np.ndarray:
        return self.b - self.a


def _edge_vectors(v: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        return np.roll(v, -1, axis=0) - v
    return np.diff(v, axis=0)


def _cumulative(v: np.ndarray, closed: bool) -> np.ndarray:
    lengths = np.hypot(*_edge_vectors(v, closed).T)
    return np.concatenate(([0.0], np.cumsum(lengths)))


def arc_length(p: Polyline) -> float:
    """Total length; closed polylines include the wrap edge."""
    return float(np.hypot(*p.edge_vectors.T).sum())


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(points))
    foot = a + t[:, None] * ab
    return np.hypot(*(points - foot).T)


def rdp_simplify(p: Polyline, epsilon: float) -> Polyline:
    """Ramer-Douglas-Peucker simplification with point-to-segment distance.

    Open polylines keep both endpoints. Closed polylines are split at vertex 0
    and the vertex farthest from it, and each half is simplified as an open
    chain. If simplification would leave a closed polyline with fewer than
    three vertices it is returned unchanged.
    """
    if epsilon <= 0:
        raise GeometryError("epsilon must be positive")
    v = p.vertices
    if len(v) <= 2:
        return p
    if not p.closed:
        keep = _rdp_mask(v, epsilon)
        return Polyline(v[keep], False)

    far = int(np.argmax(np.hypot(*(v - v[0]).T)))
    chain = np.vstack([v, v[:1]])
    keep = np.zeros(len(chain), dtype=bool)
    keep[: far + 1] |= _rdp_mask(chain[: far + 1], epsilon)
    keep[far:] |= _rdp_mask(chain[far:], epsilon)
    keep = keep[:-1]
    if keep.sum() < 3:
        return p
    return Polyline(v[keep], True)


def _rdp_mask(v: np.ndarray, epsilon: float) -> np.ndarray:
    keep = np.zeros(len(v), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(v) - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        d = _segment_distance(v[i + 1 : j], v[i], v[j])
        k = int(np.argmax(d))
        if d[k] > epsilon:
            k += i + 1
            keep[k] = True
            stack.append((k, j))
            stack.append((i, k))
    return keep


def resample_uniform(p: Polyline, n: int) -> Polyline:
    """Place ``n`` vertices at equal arclength spacing.

    Open polylines keep both endpoints exactly; closed polylines keep vertex 0
    and spread the samples around the whole perimeter.
    """
    min_n = 3 if p.closed else 2
    if n < min_n:
        raise GeometryError(f"resample_uniform needs n >= {min_n}, got {n}")
    v = p.vertices
    if p.closed:
        v = np.vstack([v, v[:1]])
    cum = _cumulative(p.vertices, p.closed)
    total = cum[-1]
    if p.closed:
        s = np.arange(n) * (total / n)
    else:
        s = np.arange(n) * (total / (n - 1))
    out = np.column_stack([np.interp(s, cum, v[:, 0]), np.interp(s, cum, v[:, 1])])
    out[0] = v[0]
    if not p.closed:
        out[-1] = v[-1]
    return Polyline(out, p.closed)


def edge_insertion_counts(lengths: Sequence[float], k: int) -> list[int]:
    """Distribute ``k`` new vertices over edges, longest remaining gap first.

    Ties go to the lowest edge index.
    """
    counts = [0] * len(lengths)
    heap = [(-float(length), i) for i, length in enumerate(lengths)]
    heapq.heapify(heap)
    for _ in range(k):
        _, i = heapq.heappop(heap)
        counts[i] += 1
        heapq.heappush(heap, (-float(lengths[i]) / (counts[i] + 1), i))
    return counts


def insert_by_edge_length(p: Polyline, n: int) -> Polyline:
    m = len(p)
    if n <= m:
        raise GeometryError(f"insert_by_edge_length needs n > {m}, got {n}")
    v = p.vertices
    edges = p.edge_vectors
    counts = edge_insertion_counts(np.hypot(*edges.T), n - m)
    out = []
    for i, c in enumerate(counts):
        out.append(v[i])
        if c:
            t = np.arange(1, c + 1) / (c + 1)
            out.extend(v[i] + t[:, None] * edges[i])
    if not p.closed:
        out.append(v[-1])
    return Polyline(np.array(out), p.closed)


def midpoint_densify(p: Polyline) -> Polyline:
    """Insert the midpoint of every edge; originals stay at even indices."""
    return Polyline(midpoint_densify_array(p.vertices, p.closed), p.closed)


def midpoint_densify_array(v: np.ndarray, closed: bool = False) -> np.ndarray:
    """Array form of :func:`midpoint_densify`; works on ``(..., d, 2)`` batches."""
    d = v.shape[-2]
    nxt = np.roll(v, -1, axis=-2) if closed else v[..., 1:, :]
    cur = v if closed else v[..., :-1, :]
    size = 2 * d if closed else 2 * d - 1
    out = np.empty(v.shape[:-2] + (size, 2), dtype=np.float64)
    out[..., 0::2, :] = v
    out[..., 1::2, :] = 0.5 * (cur + nxt)
    return out


def point_segment_distance(v, e: Segment) -> float:
    """Euclidean distance from ``v`` to the closed segment ``e``."""
    point = np.asarray(v, dtype=np.float64)[:2]
    return float(_segment_distance(point[None], e.a, e.b)[0])


def direction_cosine(e1: Segment, e2: Segment) -> float:
    u1 = e1.vector / np.hypot(*e1.vector)
    u2 = e2.vector / np.hypot(*e2.vector)
    return float(np.clip(u1 @ u2, -1.0, 1.0))


def turning_cosine(prev: Segment, next: Segment) -> float:
    """Cosine of the turn between two chained segments (1 for straight through)."""
    if not np.array_equal(prev.b, next.a):
        raise GeometryError("segments are not adjacent: next.a must equal prev.b")
    return direction_cosine(prev, next)


def point_chain_distance(points, p: Polyline) -> np.ndarray:
    """Distance from each point to the nearest edge of ``p`` (brute force)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))[:, :2]
    v = p.vertices
    nxt = np.roll(v, -1, axis=0) if p.closed else v[1:]
    cur = v if p.closed else v[:-1]
    return np.min([_segment_distance(pts, a, b) for a, b in zip(cur, nxt)], axis=0)
