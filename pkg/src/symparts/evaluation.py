"""Scoring detections against ground-truth part masks: IoU hits and precision-recall."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import InputError

HIT_IOU = 0.4


@dataclass(frozen=True, eq=False)
class GroundTruthPart:
    image_id: str
    mask: np.ndarray
    part_id: str = ""


@dataclass(frozen=True)
class PRCurve:
    points: tuple[tuple[float, float, float], ...]  # (threshold, precision, recall)
    ap: float

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["threshold", "precision", "recall"])
            for t, p, r in self.points:
                out.writerow([repr(float(t)), repr(float(p)), repr(float(r))])


def iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise InputError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def match_detections(det_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray],
                     thresh: float = HIT_IOU) -> list[bool]:
    """Greedy one-to-one matching in the given (rank) order.

    A detection hits when its best IoU with a still-unclaimed ground truth
    exceeds ``thresh`` strictly; that ground truth is then claimed.
    """
    claimed = [False] * len(gt_masks)
    hits = []
    for m in det_masks:
        best, best_k = thresh, -1
        for k, g in enumerate(gt_masks):
            if claimed[k]:
                continue
            o = iou(m, g)
            if o > best:
                best, best_k = o, k
        if best_k >= 0:
            claimed[best_k] = True
        hits.append(best_k >= 0)
    return hits


@dataclass(frozen=True)
class ScoredDetection:
    cost: float
    hit: bool


def score_image(costs: Sequence[float], det_masks: Sequence[np.ndarray],
                gt_masks: Sequence[np.ndarray], thresh: float = HIT_IOU) -> list[ScoredDetection]:
    order = sorted(range(len(costs)), key=lambda k: costs[k])
    hits = match_detections([det_masks[k] for k in order], gt_masks, thresh)
    return [ScoredDetection(float(costs[k]), h) for k, h in zip(order, hits)]


def pr_curve(scored: Sequence[ScoredDetection], n_gt: int) -> PRCurve:
    """Sweep a cost threshold over the distinct detection costs (kept = cost <= threshold).

    The curve starts at (-inf, 1, 0): nothing kept counts as precision 1.
    AP is the trapezoidal area under precision over recall.
    """
    if n_gt <= 0:
        raise InputError("precision-recall needs at least one ground-truth part")
    if any(not math.isfinite(s.cost) for s in scored):
        raise InputError("detection costs must be finite")
    ordered = sorted(scored, key=lambda s: s.cost)
    points = [(-math.inf, 1.0, 0.0)]
    kept = hits = 0
    k = 0
    while k < len(ordered):
        c = ordered[k].cost
        while k < len(ordered) and ordered[k].cost == c:
            kept += 1
            hits += ordered[k].hit
            k += 1
        points.append((c, hits / kept, hits / n_gt))
    ap = 0.0
    for (_, p0, r0), (_, p1, r1) in zip(points, points[1:]):
        ap += (r1 - r0) * (p0 + p1) / 2
    return PRCurve(tuple(points), float(min(max(ap, 0.0), 1.0)))


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties averaged)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise InputError("AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def save_pr_plot(curve: PRCurve, path: str | Path, label: str = "") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    r = [p[2] for p in curve.points]
    p = [p[1] for p in curve.points]
    ax.plot(r, p, drawstyle="steps-post", label=f"{label} AP={curve.ap:.3f}".strip())
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
