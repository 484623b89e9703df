"""Progressive polyline supervision with analytic gradients.

Original vertices (carried over from the previous layer) are supervised by an
L1 vertex loss. Vertices inserted at this layer are pulled onto the coarse
ground-truth edge they subdivide, and the original edges are aligned in
direction and turning angle. Category logits get a softmax focal loss.

Every kernel works on batches shaped ``(B, d, 2)`` that share one
:class:`VertexRoleMask`; the public single-element functions wrap them.
Gradients are taken with respect to the predicted coordinates only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import MIN_EDGE, Polyline


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 2.0
    lambda_v: float = 5.0
    lambda_p: float = 5.0
    lambda_s: float = 5e-3
    lambda_a: float = 5e-3

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value >= 0:
                raise LossError(f"{name} must be non-negative, got {value}")

    def without_edge_loss(self) -> LossWeights:
        return LossWeights(self.lambda_cls, self.lambda_v, 0.0, 0.0, 0.0)


FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0


@dataclass(frozen=True, eq=False)
class VertexRoleMask:
    """Which vertices are original and which original edge each inserted vertex subdivides.

    ``original`` lists original vertex indices in chain order. ``inserted[j]``
    lists the inserted indices lying on original edge ``j`` (from
    ``original[j]`` to ``original[j + 1]``, or the wrap edge back to
    ``original[0]`` when closed).
    """

    density: int
    original: np.ndarray
    inserted: tuple[np.ndarray, ...]
    closed: bool = False

    def __post_init__(self):
        original = np.asarray(self.original, dtype=np.intp)
        inserted = tuple(np.asarray(i, dtype=np.intp) for i in self.inserted)
        object.__setattr__(self, "original", original)
        object.__setattr__(self, "inserted", inserted)
        k = len(original)
        n_edges = k if self.closed else k - 1
        if k < (3 if self.closed else 2):
            raise LossError(f"{'closed' if self.closed else 'open'} mask needs at least {3 if self.closed else 2} original vertices")
        if len(inserted) != n_edges:
            raise LossError(f"expected {n_edges} inserted lists, got {len(inserted)}")
        every = np.concatenate([original, *inserted]) if inserted else original
        if sorted(every.tolist()) != list(range(self.density)):
            raise LossError("original and inserted indices must partition 0..density-1")

        a = original
        b = np.roll(original, -1) if self.closed else original[1:]
        a = a if self.closed else original[:-1]
        object.__setattr__(self, "_edge_a", a)
        object.__setattr__(self, "_edge_b", b)
        ins_idx = np.concatenate(inserted) if inserted else np.zeros(0, np.intp)
        ins_edge = np.concatenate([np.full(len(i), j, np.intp) for j, i in enumerate(inserted)]) if inserted else ins_idx
        object.__setattr__(self, "_ins_idx", ins_idx.astype(np.intp))
        object.__setattr__(self, "_ins_edge", ins_edge.astype(np.intp))
        if self.closed:
            e_in = np.roll(np.arange(n_edges), 1)
            e_out = np.arange(n_edges)
        else:
            e_in = np.arange(n_edges - 1)
            e_out = np.arange(1, n_edges)
        object.__setattr__(self, "_angle_in", e_in)
        object.__setattr__(self, "_angle_out", e_out)

    @classmethod
    def all_original(cls, d: int, closed: bool = False) -> VertexRoleMask:
        n_edges = d if closed else d - 1
        return cls(d, np.arange(d), tuple(np.zeros(0, np.intp) for _ in range(n_edges)), closed)

    @classmethod
    def midpoint(cls, d: int, closed: bool = False) -> VertexRoleMask:
        """Roles after one open-rule midpoint insertion: originals at even indices."""
        if d < 3 or d % 2 == 0:
            raise LossError(f"midpoint mask needs an odd density >= 3, got {d}")
        return cls.from_original(np.arange(0, d, 2), d, closed)

    @classmethod
    def from_original(cls, original, d: int, closed: bool = False) -> VertexRoleMask:
        original = np.asarray(original, dtype=np.intp)
        inserted = [np.arange(a + 1, b) for a, b in zip(original[:-1], original[1:])]
        if closed:
            tail = np.arange(original[-1] + 1, d)
            head = np.arange(0, original[0])
            inserted.append(np.concatenate([tail, head]))
        return cls(d, original, tuple(inserted), closed)

    @classmethod
    def for_layer(cls, schedule, layer: int, closed: bool = False) -> VertexRoleMask:
        d = schedule[layer]
        if schedule.grows_at(layer):
            return cls.midpoint(d, closed)
        return cls.all_original(d, closed)

    @property
    def is_original(self) -> np.ndarray:
        flags = np.zeros(self.density, dtype=bool)
        flags[self.original] = True
        return flags

    @property
    def inserted_counts(self) -> list[int]:
        return [len(i) for i in self.inserted]

    def with_closed(self, closed: bool) -> VertexRoleMask:
        if closed == self.closed:
            return self
        return VertexRoleMask.from_original(self.original, self.density, closed)


@dataclass
class LossBreakdown:
    """Unweighted loss components, the weighted total, and its gradients."""

    vertex: float = 0.0
    edge_point: float = 0.0
    edge_slope: float = 0.0
    edge_angle: float = 0.0
    classification: float = 0.0
    total: float = 0.0
    vertex_grad: Optional[np.ndarray] = field(default=None, repr=False)
    logit_grad: Optional[np.ndarray] = field(default=None, repr=False)


def _check(pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask) -> None:
    if pred.shape != target.shape:
        raise LossError(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.shape[-2] != mask.density:
        raise LossError(f"density {pred.shape[-2]} does not match mask density {mask.density}")


# -- batched kernels ---------------------------------------------------------


def vertex_terms(pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask):
    o = mask.original
    diff = pred[:, o] - target[:, o]
    value = np.abs(diff).sum(axis=(1, 2))
    grad = np.zeros_like(pred)
    grad[:, o] = np.sign(diff)
    return value, grad


def segment_distances(v: np.ndarray, s0: np.ndarray, s1: np.ndarray) -> np.ndarray:
    """Distances from points ``v`` to segments ``s0 -> s1`` (matching leading shapes)."""
    ab = s1 - s0
    t = np.clip(((v - s0) * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    off = v - (s0 + t[..., None] * ab)
    return np.hypot(off[..., 0], off[..., 1])


def edge_point_terms(pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask):
    grad = np.zeros_like(pred)
    idx = mask._ins_idx
    if len(idx) == 0:
        return np.zeros(len(pred)), grad
    s0 = target[:, mask._edge_a[mask._ins_edge]]
    s1 = target[:, mask._edge_b[mask._ins_edge]]
    v = pred[:, idx]
    ab = s1 - s0
    t = np.clip(((v - s0) * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    off = v - (s0 + t[..., None] * ab)
    dist = np.hypot(off[..., 0], off[..., 1])
    safe = np.where(dist > 0, dist, 1.0)
    grad[:, idx] = np.where((dist > 0)[..., None], off / safe[..., None], 0.0)
    return dist.sum(axis=1), grad


def _edges(x: np.ndarray, mask: VertexRoleMask) -> np.ndarray:
    return x[:, mask._edge_b] - x[:, mask._edge_a]


def _scatter_edges(grad_edges: np.ndarray, mask: VertexRoleMask) -> np.ndarray:
    grad = np.zeros((grad_edges.shape[0], mask.density, 2))
    grad[:, mask._edge_b] += grad_edges
    grad[:, mask._edge_a] -= grad_edges
    return grad


def _unit(e: np.ndarray):
    n = np.hypot(e[..., 0], e[..., 1])
    safe = np.where(n > MIN_EDGE, n, 1.0)
    return e / safe[..., None], safe, n <= MIN_EDGE


# For unit vectors 1 - a.b == |a - b|^2 / 2; the squared form cannot round below zero.


def _slope_gap(u_hat: np.ndarray, u: np.ndarray, bad: np.ndarray) -> np.ndarray:
    return np.where(bad, 0.0, 0.5 * ((u_hat - u) ** 2).sum(-1))


def _turn_gap(cos_hat, sin_hat, cos_t, sin_t, skip) -> np.ndarray:
    return np.where(skip, 0.0, 0.5 * ((cos_hat - cos_t) ** 2 + (sin_hat - sin_t) ** 2))


def edge_slope_terms(pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask):
    """Sum over original edges of ``1 - cos`` between predicted and true direction.

    Also returns a boolean per batch row flagging degenerate predicted edges;
    those edges contribute zero value and gradient.
    """
    u_hat, n_hat, bad = _unit(_edges(pred, mask))
    u, _, _ = _unit(_edges(target, mask))
    cos = (u_hat * u).sum(-1)
    cos = np.where(bad, 1.0, cos)
    # d(1 - cos)/d e_hat = -(u - cos u_hat) / |e_hat|
    g = -(u - cos[..., None] * u_hat) / n_hat[..., None]
    g[bad] = 0.0
    return _slope_gap(u_hat, u, bad).sum(axis=1), _scatter_edges(g, mask), bad.any(axis=1)


def edge_angle_terms(pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask):
    """Sum over turning vertices of ``1 - cos(turn_pred - turn_true)``."""
    e_hat = _edges(pred, mask)
    u_hat, n_hat, bad = _unit(e_hat)
    u, _, _ = _unit(_edges(target, mask))
    i, o = mask._angle_in, mask._angle_out
    if len(i) == 0:
        return np.zeros(len(pred)), np.zeros_like(pred), bad.any(axis=1)
    cos_hat = (u_hat[:, i] * u_hat[:, o]).sum(-1)
    sin_hat = u_hat[:, i, 0] * u_hat[:, o, 1] - u_hat[:, i, 1] * u_hat[:, o, 0]
    cos_t = (u[:, i] * u[:, o]).sum(-1)
    sin_t = u[:, i, 0] * u[:, o, 1] - u[:, i, 1] * u[:, o, 0]
    cos_diff = cos_hat * cos_t + sin_hat * sin_t
    sin_diff = sin_hat * cos_t - cos_hat * sin_t
    skip = bad[:, i] | bad[:, o]
    cos_diff = np.where(skip, 1.0, cos_diff)
    sin_diff = np.where(skip, 0.0, sin_diff)

    def perp_over_sq(e, n):
        return np.stack([-e[..., 1], e[..., 0]], axis=-1) / (n * n)[..., None]

    # turn = heading(out) - heading(in); d heading / d e = perp(e) / |e|^2
    g_edges = np.zeros_like(e_hat)
    g_edges[:, o] += sin_diff[..., None] * perp_over_sq(e_hat[:, o], n_hat[:, o])
    g_edges[:, i] -= sin_diff[..., None] * perp_over_sq(e_hat[:, i], n_hat[:, i])
    g_edges[bad] = 0.0
    gap = _turn_gap(cos_hat, sin_hat, cos_t, sin_t, skip)
    return gap.sum(axis=1), _scatter_edges(g_edges, mask), bad.any(axis=1)


def focal_terms(logits: np.ndarray, labels: np.ndarray, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA):
    """Softmax focal loss per row and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(log_p)
    rows = np.arange(len(logits))
    log_pt = log_p[rows, labels]
    pt = p[rows, labels]
    q = 1.0 - pt
    value = -alpha * q**gamma * log_pt
    # dL/dz_j = alpha * (gamma q^(gamma-1) pt log pt - q^gamma) * (delta_tj - p_j)
    coef = alpha * (gamma * q ** (gamma - 1) * pt * log_pt - q**gamma)
    onehot = np.zeros_like(p)
    onehot[rows, labels] = 1.0
    return value, coef[:, None] * (onehot - p)


def polyline_terms(pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask, weights: LossWeights):
    """All polyline components for a batch.

    Returns ``(components, total, grad, degenerate)`` where ``components`` maps
    component name to per-row values.
    """
    _check(pred, target, mask)
    v, gv = vertex_terms(pred, target, mask)
    p, gp = edge_point_terms(pred, target, mask)
    s, gs, bad_s = edge_slope_terms(pred, target, mask)
    a, ga, bad_a = edge_angle_terms(pred, target, mask)
    total = weights.lambda_v * v + weights.lambda_p * p + weights.lambda_s * s + weights.lambda_a * a
    grad = weights.lambda_v * gv + weights.lambda_p * gp + weights.lambda_s * gs + weights.lambda_a * ga
    components = {"vertex": v, "edge_point": p, "edge_slope": s, "edge_angle": a}
    return components, total, grad, bad_s | bad_a


def polyline_values(pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask, weights: LossWeights) -> np.ndarray:
    """Weighted polyline total per row, without gradients."""
    o = mask.original
    total = weights.lambda_v * np.abs(pred[:, o] - target[:, o]).sum(axis=(1, 2))
    if weights.lambda_p and len(mask._ins_idx):
        total = total + weights.lambda_p * edge_point_terms(pred, target, mask)[0]
    if weights.lambda_s or weights.lambda_a:
        u_hat, _, bad = _unit(_edges(pred, mask))
        u, _, _ = _unit(_edges(target, mask))
        if weights.lambda_s:
            total = total + weights.lambda_s * _slope_gap(u_hat, u, bad).sum(axis=1)
        i, j = mask._angle_in, mask._angle_out
        if weights.lambda_a and len(i):
            cos_hat = (u_hat[:, i] * u_hat[:, j]).sum(-1)
            sin_hat = u_hat[:, i, 0] * u_hat[:, j, 1] - u_hat[:, i, 1] * u_hat[:, j, 0]
            cos_t = (u[:, i] * u[:, j]).sum(-1)
            sin_t = u[:, i, 0] * u[:, j, 1] - u[:, i, 1] * u[:, j, 0]
            gap = _turn_gap(cos_hat, sin_hat, cos_t, sin_t, bad[:, i] | bad[:, j])
            total = total + weights.lambda_a * gap.sum(axis=1)
    return total


# -- single-element API ------------------------------------------------------


def _batch(pred, target, mask: VertexRoleMask):
    p = pred.vertices if isinstance(pred, Polyline) else np.asarray(pred, dtype=np.float64)
    t = target.vertices if isinstance(target, Polyline) else np.asarray(target, dtype=np.float64)
    _check(p, t, mask)
    return p[None], t[None]


def vertex_loss(pred, target, mask: VertexRoleMask) -> tuple[float, np.ndarray]:
    value, grad = vertex_terms(*_batch(pred, target, mask), mask)
    return float(value[0]), grad[0]


def edge_point_loss(pred, target, mask: VertexRoleMask) -> tuple[float, np.ndarray]:
    value, grad = edge_point_terms(*_batch(pred, target, mask), mask)
    return float(value[0]), grad[0]


def edge_slope_loss(pred, target, mask: VertexRoleMask) -> tuple[float, np.ndarray]:
    value, grad, bad = edge_slope_terms(*_batch(pred, target, mask), mask)
    if bad[0]:
        raise LossError("degenerate predicted edge")
    return float(value[0]), grad[0]


def edge_angle_loss(pred, target, mask: VertexRoleMask) -> tuple[float, np.ndarray]:
    if mask.density < 3:
        raise LossError("angle loss needs density >= 3")
    value, grad, bad = edge_angle_terms(*_batch(pred, target, mask), mask)
    if bad[0]:
        raise LossError("degenerate predicted edge")
    return float(value[0]), grad[0]


def focal_loss(logits, true_category: int, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA) -> tuple[float, np.ndarray]:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise LossError("logits must be finite")
    value, grad = focal_terms(z[None], np.array([int(true_category)]), alpha, gamma)
    return float(value[0]), grad[0]


def polyline_loss(
    pred,
    target,
    mask: VertexRoleMask,
    weights: LossWeights = LossWeights(),
    logits=None,
    category: Optional[int] = None,
) -> LossBreakdown:
    """Weighted sum of the four polyline terms, plus focal loss when ``logits`` are given."""
    p, t = _batch(pred, target, mask)
    comps, total, grad, bad = polyline_terms(p, t, mask, weights)
    if bad[0]:
        raise LossError("degenerate predicted edge")
    out = LossBreakdown(
        vertex=float(comps["vertex"][0]),
        edge_point=float(comps["edge_point"][0]),
        edge_slope=float(comps["edge_slope"][0]),
        edge_angle=float(comps["edge_angle"][0]),
        total=float(total[0]),
        vertex_grad=grad[0],
    )
    if logits is not None:
        if category is None:
            raise LossError("category is required with logits")
        cls, g = focal_loss(logits, category)
        out.classification = cls
        out.total += weights.lambda_cls * cls
        out.logit_grad = weights.lambda_cls * g
    return out
