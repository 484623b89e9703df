"""Chamfer-distance average precision for vectorized maps."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Polyline, resample_uniform
from .hsmr import REAL_CATEGORIES, ElementCategory, MapElement, canonical_closed

DEFAULT_THRESHOLDS = (0.5, 1.0, 1.5)


@dataclass(frozen=True)
class ChamferParams:
    sample_count: int = 100

    def __post_init__(self):
        if self.sample_count < 2:
            raise ValueError("sample_count must be at least 2")


def _samples(p: Polyline, params: ChamferParams) -> np.ndarray:
    if not p.closed:
        return resample_uniform(p, params.sample_count).vertices
    # fixed start vertex and orientation so equal polygons sample identically
    start = Polyline(canonical_closed(p.vertices), True)
    return resample_uniform(start, max(params.sample_count, 3)).vertices


def chamfer_distance(a: Polyline, b: Polyline, params: ChamferParams = ChamferParams()) -> float:
    """Symmetric Chamfer distance between densely resampled polylines."""
    return chamfer_from_samples(_samples(a, params), _samples(b, params))


def chamfer_from_samples(sa: np.ndarray, sb: np.ndarray) -> float:
    d = np.hypot(sa[:, None, 0] - sb[None, :, 0], sa[:, None, 1] - sb[None, :, 1])
    return 0.5 * (float(d.min(axis=1).mean()) + float(d.min(axis=0).mean()))


def chamfer_matrix(preds: Sequence[Polyline], gts: Sequence[Polyline], params: ChamferParams = ChamferParams()) -> np.ndarray:
    ps = [_samples(p, params) for p in preds]
    gs = [_samples(g, params) for g in gts]
    out = np.empty((len(ps), len(gs)))
    for i, a in enumerate(ps):
        for j, b in enumerate(gs):
            out[i, j] = chamfer_from_samples(a, b)
    return out


def match_instances(
    preds: Sequence[MapElement],
    gts: Sequence[MapElement],
    category: ElementCategory,
    threshold: float,
    params: ChamferParams = ChamferParams(),
    distances: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy one-to-one TP/FP labelling of one category's predictions.

    Predictions are visited by descending confidence (ties keep input
    order); each takes the nearest still-unmatched ground truth whose Chamfer
    distance is below ``threshold``. Returns ``(confidences, is_tp)`` in
    visiting order.
    """
    category = ElementCategory(category)
    p = [e for e in preds if e.category is category]
    g = [e for e in gts if e.category is category]
    conf = np.array([1.0 if e.confidence is None else e.confidence for e in p], dtype=np.float64)
    order = np.argsort(-conf, kind="stable")
    if distances is None:
        distances = chamfer_matrix([e.shape for e in p], [e.shape for e in g], params)
    taken = np.zeros(len(g), dtype=bool)
    is_tp = np.zeros(len(p), dtype=bool)
    for rank, i in enumerate(order):
        if not len(g):
            break
        d = np.where(taken, np.inf, distances[i])
        j = int(np.argmin(d))
        if d[j] < threshold:
            taken[j] = True
            is_tp[rank] = True
    return conf[order], is_tp


@dataclass
class APResult:
    category: ElementCategory
    threshold: float
    ap: Optional[float]
    precision: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    recall: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    tp: int = 0
    fp: int = 0
    n_gt: int = 0

    @property
    def applicable(self) -> bool:
        return self.ap is not None


def average_precision(
    labels: Sequence[bool],
    n_gt: int,
    category: ElementCategory = ElementCategory.DIVIDER,
    threshold: float = float("nan"),
) -> APResult:
    """All-point interpolated AP from TP/FP labels sorted by descending confidence.

    With no ground truth the AP is undefined and reported as ``None``.
    """
    labels = np.asarray(labels, dtype=bool)
    tp = np.cumsum(labels)
    fp = np.cumsum(~labels)
    if n_gt == 0:
        return APResult(ElementCategory(category), threshold, None, tp=int(labels.sum()), fp=int((~labels).sum()))
    if len(labels) == 0:
        return APResult(ElementCategory(category), threshold, 0.0, n_gt=n_gt)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recall)))
    ap = float(np.sum(steps * envelope))
    return APResult(
        ElementCategory(category),
        threshold,
        min(max(ap, 0.0), 1.0),
        precision=precision,
        recall=recall,
        tp=int(tp[-1]),
        fp=int(fp[-1]),
        n_gt=n_gt,
    )


@dataclass
class MapScore:
    results: dict[tuple[ElementCategory, float], APResult]
    category_ap: dict[ElementCategory, Optional[float]]
    mean_ap: float
    thresholds: tuple[float, ...]
    warnings: list[str] = field(default_factory=list)

    def table_rows(self) -> list[dict]:
        rows = []
        for cat in REAL_CATEGORIES:
            row = {"category": cat.value}
            for t in self.thresholds:
                ap = self.results[(cat, t)].ap
                row[f"AP@{t:g}"] = ap
            row["AP"] = self.category_ap[cat]
            rows.append(row)
        return rows

    def to_text(self) -> str:
        head = ["category"] + [f"AP@{t:g}" for t in self.thresholds] + ["AP"]
        lines = ["  ".join(f"{h:>12}" for h in head)]

        def fmt(v):
            return "n/a" if v is None else f"{100 * v:.1f}"

        for row in self.table_rows():
            cells = [row["category"]] + [fmt(row[h]) for h in head[1:]]
            lines.append("  ".join(f"{c:>12}" for c in cells))
        lines.append(f"{'mAP':>12}  {100 * self.mean_ap:.1f}")
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        fields = ["category"] + [f"AP@{t:g}" for t in self.thresholds] + ["AP"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in self.table_rows():
            w.writerow({k: "" if v is None else (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
        w.writerow({"category": "mAP", "AP": f"{self.mean_ap:.6f}"})
        return buf.getvalue()


def map_score(
    pred_scenes: Sequence[Sequence[MapElement]],
    gt_scenes: Sequence[Sequence[MapElement]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    params: ChamferParams = ChamferParams(),
) -> MapScore:
    """Per-category AP averaged over thresholds, and their mean over categories.

    Categories with no ground truth anywhere are left out of the mean and
    noted in ``warnings``.
    """
    if len(pred_scenes) != len(gt_scenes):
        raise ValueError(f"{len(pred_scenes)} prediction scenes vs {len(gt_scenes)} ground-truth scenes")
    thresholds = tuple(float(t) for t in thresholds)
    results = {}
    category_ap: dict[ElementCategory, Optional[float]] = {}
    warnings = []
    for cat in REAL_CATEGORIES:
        per_scene = []
        n_gt = 0
        for preds, gts in zip(pred_scenes, gt_scenes):
            p = [e for e in preds if e.category is cat]
            g = [e for e in gts if e.category is cat]
            n_gt += len(g)
            dist = chamfer_matrix([e.shape for e in p], [e.shape for e in g], params)
            per_scene.append((p, g, dist))
        aps = []
        for t in thresholds:
            confs, labels = [], []
            for p, g, dist in per_scene:
                c, l = match_instances(p, g, cat, t, params, distances=dist)
                confs.append(c)
                labels.append(l)
            conf = np.concatenate(confs) if confs else np.zeros(0)
            lab = np.concatenate(labels) if labels else np.zeros(0, bool)
            order = np.argsort(-conf, kind="stable")
            res = average_precision(lab[order], n_gt, cat, t)
            results[(cat, t)] = res
            aps.append(res.ap)
        if n_gt == 0:
            category_ap[cat] = None
            warnings.append(f"no ground truth for category {cat.value}; excluded from mAP")
        else:
            category_ap[cat] = float(np.mean(aps))
    valid = [v for v in category_ap.values() if v is not None]
    mean_ap = float(np.mean(valid)) if valid else 0.0
    return MapScore(results, category_ap, mean_ap, thresholds, warnings)
