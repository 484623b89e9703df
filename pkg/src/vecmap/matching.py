"""Set matching between predicted and ground-truth map elements.

The cost of pairing ground-truth slot ``i`` with prediction ``k`` is the
negative class probability plus the vertex matching cost, minimized over the
ground truth's equivalent vertex orderings. Padded slots cost nothing. The
optimal bijection is found with the Hungarian algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Polyline
from .hsmr import ElementCategory, MapElement, PermutationSet, element_at_density, equivalent_permutations


class MatchingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PredictedElement:
    """Candidate element: vertices at the active layer density plus category logits.

    Logit columns follow :data:`vecmap.hsmr.CATEGORY_ORDER` (``none`` last).
    """

    vertices: np.ndarray
    category_logits: np.ndarray

    def __post_init__(self):
        v = self.vertices.vertices if isinstance(self.vertices, Polyline) else self.vertices
        v = np.array(v, dtype=np.float64)[:, :2]
        logits = np.array(self.category_logits, dtype=np.float64)
        if logits.shape != (4,) or not np.all(np.isfinite(logits)):
            raise MatchingError("category_logits must be 4 finite values")
        if not np.all(np.isfinite(v)):
            raise MatchingError("predicted vertices must be finite")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "category_logits", logits)

    @property
    def density(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class GroundTruthSet:
    """The ``M`` real elements of a scene; padding to ``N`` happens on demand."""

    elements: tuple[MapElement, ...] = ()

    def __post_init__(self):
        elements = tuple(e for e in self.elements)
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def padded(self, n: int) -> list[MapElement]:
        real = [e for e in self.elements if not e.is_padding]
        if len(real) > n:
            raise MatchingError(f"{len(real)} ground-truth elements exceed N={n}")
        return real + [MapElement.padding()] * (n - len(real))


@dataclass(frozen=True, eq=False)
class Assignment:
    """Optimal matching.

    ``sigma[i]`` is the prediction assigned to ground-truth slot ``i``.
    ``orderings[i]`` is the vertex ordering of slot ``i``'s target (``None``
    for padding) such that ``target[ordering]`` lines up with the prediction.
    """

    sigma: np.ndarray
    orderings: tuple[Optional[np.ndarray], ...]
    total_cost: float
    costs: Optional[np.ndarray] = field(default=None, repr=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_vertices(x) -> np.ndarray:
    if isinstance(x, PredictedElement):
        return x.vertices
    if isinstance(x, Polyline):
        return x.vertices
    return np.asarray(x, dtype=np.float64)


def polyline_match_cost(pred, target, perms: PermutationSet) -> tuple[float, tuple[int, ...]]:
    """Mean per-vertex L1 distance, minimized over ``perms``.

    Returns the cost and the minimizing ordering (applied to ``target``).
    Ties resolve to the first ordering in ``perms``, identity included.
    """
    p = _as_vertices(pred)
    t = _as_vertices(target)
    if p.shape != t.shape or perms.density != len(t):
        raise MatchingError(f"density mismatch: pred {len(p)}, target {len(t)}, perms {perms.density}")
    costs = np.abs(p[None] - t[perms.orderings]).sum(axis=(1, 2)) / len(t)
    best = int(np.argmin(costs))
    return float(costs[best]), tuple(int(i) for i in perms.orderings[best])


class TargetBank:
    """Ground-truth elements rendered at one density, with every equivalent ordering.

    Groups open and closed elements so the cost against all candidates is two
    vectorized evaluations rather than one per element.
    """

    def __init__(self, elements: Sequence[MapElement], density: int, targets: Optional[Sequence[Polyline]] = None):
        real = [e for e in elements if not e.is_padding]
        self.density = density
        self.elements = real
        if targets is None:
            targets = [element_at_density(e, density) for e in real]
        self.targets = [t.vertices for t in targets]
        self.closed = np.array([e.closed for e in real], dtype=bool)
        self.categories = np.array([e.category.index for e in real], dtype=np.intp)
        self._groups = []
        for closed in (False, True):
            idx = np.flatnonzero(self.closed == closed)
            if len(idx) == 0:
                continue
            orderings = equivalent_permutations(closed, density).orderings
            stacked = np.stack([self.targets[i] for i in idx])
            self._groups.append((idx, orderings, stacked[:, orderings]))

    def __len__(self) -> int:
        return len(self.elements)

    def orderings(self, i: int) -> np.ndarray:
        return equivalent_permutations(bool(self.closed[i]), self.density).orderings

    def match_costs(self, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vertex cost of every (target, candidate) pair and the best ordering index.

        ``candidates`` is ``(N, d, 2)``; both outputs are ``(M, N)``.
        """
        m, n = len(self), len(candidates)
        if candidates.shape[1] != self.density:
            raise MatchingError(f"candidate density {candidates.shape[1]} != target density {self.density}")
        cost = np.empty((m, n))
        best = np.empty((m, n), dtype=np.intp)
        for idx, _, permuted in self._groups:
            # (g, P, 1, d, 2) - (1, 1, N, d, 2) -> (g, P, N)
            dist = np.abs(permuted[:, :, None] - candidates[None, None]).sum(axis=(3, 4)) / self.density
            best[idx] = np.argmin(dist, axis=1)
            cost[idx] = np.take_along_axis(dist, best[idx][:, None], axis=1)[:, 0]
        return cost, best

    def aligned(self, i: int, ordering_index: int) -> np.ndarray:
        return self.targets[i][self.orderings(i)[ordering_index]]


def build_cost_matrix(preds: Sequence[PredictedElement], gts: GroundTruthSet | Sequence[MapElement]) -> np.ndarray:
    """``N x N`` matrix; row ``i`` is ground-truth slot ``i``, column ``k`` prediction ``k``."""
    costs, _ = _cost_matrix(preds, gts)
    return costs


def _cost_matrix(preds, gts):
    n = len(preds)
    slots = gts.padded(n) if isinstance(gts, GroundTruthSet) else list(gts)
    if len(slots) != n:
        raise MatchingError(f"{len(slots)} ground-truth slots for {n} predictions")
    costs = np.zeros((n, n))
    real_rows = [i for i, e in enumerate(slots) if not e.is_padding]
    best = np.zeros((n, n), dtype=np.intp)
    bank = None
    if real_rows:
        density = preds[0].density
        if any(p.density != density for p in preds):
            raise MatchingError("predictions have mixed densities")
        bank = TargetBank([slots[i] for i in real_rows], density)
        cand = np.stack([p.vertices for p in preds])
        probs = softmax(np.stack([p.category_logits for p in preds]))
        vcost, vbest = bank.match_costs(cand)
        costs[real_rows] = vcost - probs[:, bank.categories].T
        best[real_rows] = vbest
    return costs, (slots, real_rows, bank, best)


def _solve(costs: np.ndarray) -> np.ndarray:
    """Column for each row of an ``n x m`` matrix with ``n <= m``.

    Shortest augmenting path form of the Hungarian method with row/column
    potentials, O(n^2 m). Ties pick the lowest column index.
    """
    n, m = costs.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.intp)  # p[j]: row (1-based) matched to column j
    way = np.zeros(m + 1, dtype=np.intp)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = costs[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cols = np.empty(n, dtype=np.intp)
    for j in range(1, m + 1):
        if p[j]:
            cols[p[j] - 1] = j - 1
    return cols


def hungarian(costs) -> Assignment:
    """Minimum-cost bijection of a square matrix (rows to columns)."""
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise MatchingError(f"cost matrix must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise MatchingError("cost matrix has non-finite entries")
    n = len(c)
    sigma = _solve(c) if n else np.zeros(0, dtype=np.intp)
    total = float(c[np.arange(n), sigma].sum())
    return Assignment(sigma=sigma, orderings=(None,) * n, total_cost=total, costs=c)


def assign_rows(costs: np.ndarray) -> np.ndarray:
    """Optimal columns for a rectangular ``M x N`` matrix, ``M <= N``."""
    if costs.shape[0] == 0:
        return np.zeros(0, dtype=np.intp)
    return _solve(costs)


def match(preds: Sequence[PredictedElement], gts: GroundTruthSet | Sequence[MapElement]) -> Assignment:
    """Cost matrix plus Hungarian assignment, keeping each pair's best ordering."""
    costs, (slots, real_rows, bank, best) = _cost_matrix(preds, gts)
    result = hungarian(costs)
    orderings: list[Optional[np.ndarray]] = [None] * len(slots)
    for r, i in enumerate(real_rows):
        k = result.sigma[i]
        orderings[i] = bank.orderings(r)[best[i, k]]
    return Assignment(result.sigma, tuple(orderings), result.total_cost, costs)


__all__ = [
    "Assignment",
    "ElementCategory",
    "GroundTruthSet",
    "MatchingError",
    "PredictedElement",
    "TargetBank",
    "assign_rows",
    "build_cost_matrix",
    "hungarian",
    "match",
    "polyline_match_cost",
    "softmax",
]
