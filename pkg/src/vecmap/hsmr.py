"""Hierarchical sparse representation of map elements.

One element can be rendered at any vertex density; a decoder layer stack
works through a :class:`DensitySchedule` of such densities, and matching
treats every vertex ordering in :func:`equivalent_permutations` as the same
shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .geometry import GeometryError, Polyline, insert_by_edge_length, resample_uniform


class ElementCategory(str, enum.Enum):
    PED_CROSSING = "ped_crossing"
    DIVIDER = "divider"
    BOUNDARY = "boundary"
    NONE = "none"

    @property
    def index(self) -> int:
        return CATEGORY_ORDER.index(self)


# Column order of category logits; NONE is last.
CATEGORY_ORDER = (
    ElementCategory.PED_CROSSING,
    ElementCategory.DIVIDER,
    ElementCategory.BOUNDARY,
    ElementCategory.NONE,
)
REAL_CATEGORIES = CATEGORY_ORDER[:-1]
NONE_INDEX = 3


@dataclass(frozen=True, eq=False)
class MapElement:
    """A vectorized map instance.

    ``shape`` is ``None`` only for padding slots of category ``NONE``.
    Pedestrian crossings are closed; dividers and boundaries are open.
    ``confidence`` is set on predictions and left ``None`` on ground truth.
    """

    category: ElementCategory
    shape: Optional[Polyline]
    confidence: Optional[float] = None

    def __post_init__(self):
        category = ElementCategory(self.category)
        object.__setattr__(self, "category", category)
        if category is ElementCategory.NONE:
            if self.shape is not None:
                raise ValueError("padding element must not carry a shape")
            return
        if not isinstance(self.shape, Polyline):
            raise ValueError(f"{category.value} element needs a Polyline shape")
        if self.shape.closed != (category is ElementCategory.PED_CROSSING):
            raise ValueError(f"{category.value} element has closed={self.shape.closed}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def closed(self) -> bool:
        return self.category is ElementCategory.PED_CROSSING

    @property
    def is_padding(self) -> bool:
        return self.category is ElementCategory.NONE

    def __eq__(self, other) -> bool:
        if not isinstance(other, MapElement):
            return NotImplemented
        return (
            self.category is other.category
            and self.shape == other.shape
            and self.confidence == other.confidence
        )

    @classmethod
    def padding(cls) -> MapElement:
        return cls(ElementCategory.NONE, None)


@dataclass(frozen=True)
class DensitySchedule:
    """Vertex count per decoder layer.

    Counts never decrease, and every increase follows the open-element
    doubling rule ``d -> 2d - 1`` so that midpoint insertion reaches the next
    layer exactly.
    """

    counts: tuple[int, ...] = (3, 5, 9, 17, 17, 17)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if not counts:
            raise ValueError("schedule needs at least one layer")
        if counts[0] < 2:
            raise ValueError("first layer density must be at least 2")
        for a, b in zip(counts, counts[1:]):
            if b != a and b != 2 * a - 1:
                raise ValueError(f"schedule step {a} -> {b} violates the d -> 2d-1 doubling rule")

    @classmethod
    def parse(cls, text: str) -> DensitySchedule:
        return cls(tuple(int(t) for t in text.replace("/", ",").split(",") if t.strip()))

    def __len__(self) -> int:
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)

    def __getitem__(self, i: int) -> int:
        return self.counts[i]

    def grows_at(self, layer: int) -> bool:
        """True if ``layer`` has more vertices than the layer before it."""
        return layer > 0 and self.counts[layer] > self.counts[layer - 1]

    def __str__(self) -> str:
        return "/".join(map(str, self.counts))


@dataclass(frozen=True, eq=False)
class PermutationSet:
    orderings: np.ndarray

    def __post_init__(self):
        orderings = np.asarray(self.orderings, dtype=np.intp)
        if orderings.ndim != 2:
            raise ValueError("orderings must be a 2-D array")
        d = orderings.shape[1]
        if not np.all(np.sort(orderings, axis=1) == np.arange(d)):
            raise ValueError("every ordering must be a bijection on 0..d-1")
        if not np.any(np.all(orderings == np.arange(d), axis=1)):
            raise ValueError("permutation set must contain the identity")
        orderings.setflags(write=False)
        object.__setattr__(self, "orderings", orderings)

    def __len__(self) -> int:
        return len(self.orderings)

    def __iter__(self):
        return (tuple(int(i) for i in o) for o in self.orderings)

    def __contains__(self, ordering) -> bool:
        return bool(np.any(np.all(self.orderings == np.asarray(ordering), axis=1)))

    @property
    def density(self) -> int:
        return self.orderings.shape[1]


@lru_cache(maxsize=None)
def _orderings(closed: bool, d: int) -> np.ndarray:
    idx = np.arange(d)
    if not closed:
        return np.stack([idx, idx[::-1]])
    forward = [(idx + s) % d for s in range(d)]
    backward = [(s - idx) % d for s in range(d)]
    out = np.unique(np.array(forward + backward), axis=0)
    # identity first, then lexicographic
    is_identity = np.all(out == idx, axis=1)
    return np.concatenate([out[is_identity], out[~is_identity]])


def equivalent_permutations(e: MapElement | bool, d: int) -> PermutationSet:
    """Vertex orderings of a density-``d`` rendering that trace the same shape.

    Open elements admit identity and reversal; closed elements admit every
    cyclic shift in both directions.
    """
    if d < 2:
        raise ValueError(f"density must be at least 2, got {d}")
    closed = e if isinstance(e, bool) else e.closed
    return PermutationSet(_orderings(closed, d))


def canonical_closed(v: np.ndarray) -> np.ndarray:
    """Reorder a closed vertex ring: lexicographically smallest vertex first, counter-clockwise."""
    x, y = v[:, 0], v[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area < 0:
        v = v[::-1]
    start = np.lexsort((v[:, 1], v[:, 0]))[0]
    return np.roll(v, -start, axis=0)


def render_at_density(p: Polyline, d: int) -> Polyline:
    """Resample or subdivide ``p`` to exactly ``d`` vertices.

    The result does not depend on which vertex order of ``p`` was given
    beyond what the equivalent permutations absorb: an open polyline renders
    as the reversal of its reversed rendering, and every cyclic shift or
    reversal of a closed polyline renders identically.
    """
    min_d = 3 if p.closed else 2
    if d < min_d:
        raise GeometryError(f"density {d} below minimum {min_d}")
    m = len(p)
    if d == m:
        return p
    v = p.vertices
    flip = False
    if p.closed:
        v = canonical_closed(v)
    elif tuple(v[-1]) < tuple(v[0]):
        v, flip = v[::-1], True
    src = Polyline(v, p.closed)
    out = resample_uniform(src, d) if m > d else insert_by_edge_length(src, d)
    return out.reversed() if flip else out


def element_at_density(e: MapElement, d: int) -> Polyline:
    if e.shape is None:
        raise ValueError("padding elements have no shape")
    return render_at_density(e.shape, d)


def ground_truth_pyramid(e: MapElement, schedule: DensitySchedule) -> list[Polyline]:
    """One supervision target per layer, rendered at that layer's density."""
    cache: dict[int, Polyline] = {}
    out = []
    for d in schedule:
        if d not in cache:
            cache[d] = element_at_density(e, d)
        out.append(cache[d])
    return out


__all__ = [
    "CATEGORY_ORDER",
    "DensitySchedule",
    "ElementCategory",
    "MapElement",
    "NONE_INDEX",
    "PermutationSet",
    "REAL_CATEGORIES",
    "element_at_density",
    "equivalent_permutations",
    "ground_truth_pyramid",
    "render_at_density",
]
