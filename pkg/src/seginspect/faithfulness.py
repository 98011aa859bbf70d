"""Deletion and insertion faithfulness curves with trapezoidal AUC.

Deletion zeroes the next N most-salient pixels each step and records the
model's scalar class score; insertion starts from a Gaussian-blurred
baseline and restores the next N most-salient original pixels. Both curves
include the unperturbed point at x=0 and break saliency ties in row-major
order. A steep deletion drop (low AUC) and a fast insertion rise (high
AUC) indicate a faithful map.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .imaging import BinaryMask, ImageTensor, SaliencyMap, gaussian_blur
from .models import SegmentationModel, freeze_target_region, predict_scores, scalarize_class_score

KIND_DELETION = "deletion"
KIND_INSERTION = "insertion"


class FaithfulnessError(ValueError):
    pass


@dataclass(frozen=True)
class FaithfulnessConfig:
    steps: int = 100
    pixels_per_step: int | None = None  # default ceil(H*W / steps)
    blur_sigma: float = 5.0

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise FaithfulnessError("steps must be >= 1")
        if self.pixels_per_step is not None and self.pixels_per_step < 1:
            raise FaithfulnessError("pixels_per_step must be >= 1")
        if self.blur_sigma < 0:
            raise FaithfulnessError("blur_sigma must be >= 0")

    def resolved_pixels_per_step(self, total_pixels: int) -> int:
        n = self.pixels_per_step
        if n is None:
            n = math.ceil(total_pixels / self.steps)
        if n * self.steps < total_pixels:
            raise FaithfulnessError(
                f"{self.steps} steps of {n} pixels cannot cover {total_pixels} pixels"
            )
        return n


@dataclass(frozen=True)
class FaithfulnessCurve:
    xs: tuple[float, ...]
    hs: tuple[float, ...]
    auc: float
    kind: str

    def __post_init__(self) -> None:
        if len(self.xs) != len(self.hs):
            raise FaithfulnessError("xs and hs must have equal length")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise FaithfulnessError("xs must be strictly increasing")
        if self.xs[0] != 0.0 or self.xs[-1] != 1.0:
            raise FaithfulnessError("xs must run from 0 to 1")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,h\n")
        for x, h in zip(self.xs, self.hs):
            buf.write(f"{x!r},{h!r}\n")
        return buf.getvalue()


def trapezoid_auc(xs: tuple[float, ...], hs: tuple[float, ...]) -> float:
    auc = 0.0
    for i in range(len(xs) - 1):
        auc += (xs[i + 1] - xs[i]) * (hs[i] + hs[i + 1]) / 2.0
    return auc


def saliency_order(sal: SaliencyMap) -> np.ndarray:
    """Flat pixel indices from most to least salient, ties row-major."""
    return np.argsort(-sal.values.reshape(-1), kind="stable")


def faithfulness_curves(
    model: SegmentationModel,
    img: ImageTensor,
    sal: SaliencyMap,
    category: int,
    cfg: FaithfulnessConfig,
    target_region: BinaryMask | None = None,
) -> tuple[FaithfulnessCurve, FaithfulnessCurve]:
    """Run both perturbation sweeps and return (deletion, insertion)."""
    if (sal.height, sal.width) != (img.height, img.width):
        raise FaithfulnessError("saliency and image dimensions differ")
    total = img.height * img.width
    per_step = cfg.resolved_pixels_per_step(total)
    if target_region is None:
        target_region = freeze_target_region(model, img, category)

    order = saliency_order(sal)
    xs = tuple(i / cfg.steps for i in range(cfg.steps + 1))

    def score(data: np.ndarray) -> float:
        out = predict_scores(model, ImageTensor(data, img.range_tag))
        return scalarize_class_score(out, category, target_region)

    flat_shape = (img.channels, total)

    deleted = img.data.copy().reshape(flat_shape)
    del_hs = [score(deleted.reshape(img.data.shape))]
    for i in range(cfg.steps):
        chunk = order[i * per_step : min((i + 1) * per_step, total)]
        deleted[:, chunk] = 0.0
        del_hs.append(score(deleted.reshape(img.data.shape)))

    baseline = gaussian_blur(img, cfg.blur_sigma).data.reshape(flat_shape).copy()
    original = img.data.reshape(flat_shape)
    ins_hs = [score(baseline.reshape(img.data.shape))]
    for i in range(cfg.steps):
        chunk = order[i * per_step : min((i + 1) * per_step, total)]
        baseline[:, chunk] = original[:, chunk]
        ins_hs.append(score(baseline.reshape(img.data.shape)))

    deletion = FaithfulnessCurve(
        xs=xs, hs=tuple(del_hs), auc=trapezoid_auc(xs, tuple(del_hs)), kind=KIND_DELETION
    )
    insertion = FaithfulnessCurve(
        xs=xs, hs=tuple(ins_hs), auc=trapezoid_auc(xs, tuple(ins_hs)), kind=KIND_INSERTION
    )
    return deletion, insertion
