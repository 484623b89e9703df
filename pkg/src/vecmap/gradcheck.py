"""Central finite-difference verification of the analytic loss gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import (
    VertexRoleMask,
    edge_angle_terms,
    edge_point_terms,
    edge_slope_terms,
    focal_terms,
    vertex_terms,
)

COMPONENTS = ("vertex", "edge_point", "edge_slope", "edge_angle", "focal")
DENSITIES = (3, 5, 9, 17)


@dataclass
class ComponentReport:
    component: str
    density: int
    checked: int = 0
    skipped: int = 0
    max_rel_error: float = 0.0
    failures: int = 0

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.checked > 0


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[ComponentReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_text(self) -> str:
        lines = [f"{'component':>12} {'density':>7} {'checked':>7} {'skipped':>7} {'max rel err':>12}  result"]
        for e in self.entries:
            lines.append(
                f"{e.component:>12} {e.density:>7} {e.checked:>7} {e.skipped:>7} {e.max_rel_error:>12.3e}  {'PASS' if e.passed else 'FAIL'}"
            )
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})")
        return "\n".join(lines) + "\n"


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max-norm error relative to the larger gradient, floored for near-zero gradients."""
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a batched function ``f((B, *x.shape)) -> (B,)``.

    All ``2 * x.size`` perturbed copies go through ``f`` as one batch.
    """
    n = x.size
    eye = np.eye(n).reshape((n,) + x.shape) * h
    values = f(np.concatenate([x[None] + eye, x[None] - eye]))
    return ((values[:n] - values[n:]) / (2 * h)).reshape(x.shape)


def random_configuration(gen: np.random.Generator, d: int):
    """A random target chain, a perturbed prediction, and a role mask."""
    closed = bool(gen.integers(2))
    heading = np.cumsum(gen.uniform(-1.2, 1.2, d))
    steps = gen.uniform(0.5, 2.0, d)[:, None] * np.column_stack([np.cos(heading), np.sin(heading)])
    target = np.cumsum(steps, axis=0)
    pred = target + gen.normal(0.0, 0.4, target.shape)
    # a closed ring needs three originals, so d=3 closed is always all-original
    midpoint = bool(gen.integers(2)) and (d >= 5 or not closed)
    mask = VertexRoleMask.midpoint(d, closed) if midpoint else VertexRoleMask.all_original(d, closed)
    return pred, target, mask


def _near_kink(component: str, pred: np.ndarray, target: np.ndarray, mask: VertexRoleMask, skip: float) -> bool:
    if component == "vertex":
        o = mask.original
        return bool(np.any(np.abs(pred[o] - target[o]) < skip))
    if component == "edge_point":
        idx = mask._ins_idx
        if not len(idx):
            return False
        s0 = target[mask._edge_a[mask._ins_edge]]
        s1 = target[mask._edge_b[mask._ins_edge]]
        ab = s1 - s0
        length = np.hypot(ab[:, 0], ab[:, 1])
        t = ((pred[idx] - s0) * ab).sum(-1) / length**2
        foot = s0 + np.clip(t, 0, 1)[:, None] * ab
        dist = np.hypot(*(pred[idx] - foot).T)
        # on the segment, or at the end-cap boundary of the projection
        return bool(np.any(dist < skip) or np.any(np.abs(t * length) < skip) or np.any(np.abs((t - 1) * length) < skip))
    edges = pred[mask._edge_b] - pred[mask._edge_a]
    return bool(np.any(np.hypot(edges[:, 0], edges[:, 1]) < skip))


_KERNELS = {
    "vertex": lambda p, t, m: vertex_terms(p, t, m)[:2],
    "edge_point": lambda p, t, m: edge_point_terms(p, t, m)[:2],
    "edge_slope": lambda p, t, m: edge_slope_terms(p, t, m)[:2],
    "edge_angle": lambda p, t, m: edge_angle_terms(p, t, m)[:2],
}


def run_grad_check(
    trials: int = 200,
    densities=DENSITIES,
    seed: int = 0,
    h: float = 1e-6,
    tolerance: float = 1e-4,
    skip: float = 1e-5,
) -> GradCheckReport:
    """Compare every analytic gradient with central differences on random inputs.

    Each (component, density) pair gets ``trials`` random configurations;
    ones within ``skip`` of a non-differentiable locus are counted as skipped.
    """
    gen = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for d in densities:
        rows = {c: ComponentReport(c, d) for c in COMPONENTS}
        for _ in range(trials):
            pred, target, mask = random_configuration(gen, d)
            for name, kernel in _KERNELS.items():
                entry = rows[name]
                if _near_kink(name, pred, target, mask, skip):
                    entry.skipped += 1
                    continue
                _, analytic = kernel(pred[None], target[None], mask)

                def f(batch, kernel=kernel):
                    return kernel(batch, np.broadcast_to(target, batch.shape), mask)[0]

                err = relative_error(analytic[0], numeric_gradient(f, pred, h))
                entry.checked += 1
                entry.max_rel_error = max(entry.max_rel_error, err)
                entry.failures += err >= tolerance

            logits = gen.normal(0.0, 2.0, 4)
            label = np.array([gen.integers(4)])
            _, analytic = focal_terms(logits[None], label)
            numeric = numeric_gradient(lambda z: focal_terms(z, np.repeat(label, len(z)))[0], logits, h)
            err = relative_error(analytic[0], numeric)
            entry = rows["focal"]
            entry.checked += 1
            entry.max_rel_error = max(entry.max_rel_error, err)
            entry.failures += err >= tolerance
        report.entries.extend(rows.values())
    return report
