"""Plausibility metrics for saliency maps and segmentation scoring.

Plausibility compares an explanation against human ground truth:

* energy ratio inside the ground-truth mask (pointing-game style),
* IoU of the top-|GT| saliency support against the mask,
* IoU of the two bounding boxes.

Saliency is min-max normalized first; the top-k binarization budget is the
ground-truth pixel count, which self-normalizes across object sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .imaging import BBoxRect, BinaryMask, SaliencyMap, bbox_of_mask, topk_binarize


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PlausibilityScores:
    ebpg: float
    iou: float
    bbox: float

    def __post_init__(self) -> None:
        for name in ("ebpg", "iou", "bbox"):
            value = getattr(self, name)
            if not np.isfinite(value) or not 0.0 <= value <= 1.0:
                raise MetricError(f"{name} must be a finite ratio in [0, 1], got {value}")


def _normalize_for_energy(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    hi = values.max()
    if hi > lo:
        return (values - lo) / (hi - lo)
    if hi > 0:
        # A constant positive map carries uniform energy.
        return np.ones_like(values)
    raise MetricError("saliency map has zero energy after normalization")


def _rect_iou(a: BBoxRect, b: BBoxRect) -> float:
    row_lo = max(a.row_min, b.row_min)
    row_hi = min(a.row_max, b.row_max)
    col_lo = max(a.col_min, b.col_min)
    col_hi = min(a.col_max, b.col_max)
    if row_lo > row_hi or col_lo > col_hi:
        inter = 0
    else:
        inter = (row_hi - row_lo + 1) * (col_hi - col_lo + 1)
    union = a.area() + b.area() - inter
    return inter / union


def plausibility_metrics(sal: SaliencyMap, gt: BinaryMask) -> PlausibilityScores:
    """Energy, top-k overlap, and bbox overlap of a map against ground truth."""
    if (sal.height, sal.width) != (gt.height, gt.width):
        raise MetricError("saliency and ground-truth dimensions differ")
    gt_count = gt.count()
    if gt_count == 0:
        raise MetricError("ground-truth mask is empty")

    energy = _normalize_for_energy(sal.values)
    total = energy.sum()
    ebpg = float(energy[gt.bits].sum() / total)

    top = topk_binarize(SaliencyMap(sal.category, energy), gt_count)
    inter = int((top.bits & gt.bits).sum())
    union = int((top.bits | gt.bits).sum())
    iou = inter / union

    bbox = _rect_iou(bbox_of_mask(top), bbox_of_mask(gt))
    return PlausibilityScores(ebpg=ebpg, iou=float(iou), bbox=float(bbox))


def dice_loss(pred: BinaryMask, gt: BinaryMask) -> float:
    """1 - 2|P & GT| / (|P| + |GT|); two empty masks score a perfect 0."""
    if pred.bits.shape != gt.bits.shape:
        raise MetricError("mask dimensions differ")
    size_sum = pred.count() + gt.count()
    if size_sum == 0:
        return 0.0
    inter = int((pred.bits & gt.bits).sum())
    return 1.0 - 2.0 * inter / size_sum


def segmentation_iou(
    pred_labels: np.ndarray,
    gt_labels: np.ndarray,
    categories: Sequence[int],
    void_id: int | None = None,
) -> tuple[dict[int, float], float]:
    """Per-class IoU and their mean, both as percentages.

    Pixels labeled void (in either map) are excluded; classes absent from
    both maps are dropped from the mean.
    """
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape:
        raise MetricError("label map dimensions differ")
    valid = np.ones(pred.shape, dtype=bool)
    if void_id is not None:
        valid &= (pred != void_id) & (gt != void_id)

    per_class: dict[int, float] = {}
    for cat in categories:
        p = (pred == cat) & valid
        g = (gt == cat) & valid
        union = int((p | g).sum())
        if union == 0:
            continue  # absent from both; excluded from the mean
        inter = int((p & g).sum())
        per_class[cat] = 100.0 * inter / union
    if not per_class:
        raise MetricError("no class present in either label map")
    miou = float(np.mean(list(per_class.values())))
    return per_class, miou
