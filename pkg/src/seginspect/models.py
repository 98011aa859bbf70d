"""Black-box segmentation-model contract and closed-form toy models.

Every attribution and faithfulness routine goes through ``predict_scores``
and ``scalarize_class_score`` only, so any backend that returns a per-pixel
class distribution plugs in. The toy models are analytically documented so
explainer and metric tests have exact oracles:

* ``ConstantModel``       -- fixed distribution at every pixel.
* ``BrightnessToyModel``  -- P(fg) = channel-mean intensity, clamped to [0, 1].
* ``RegionTemplateModel`` -- P(fg) uniform = mean intensity inside a fixed
  template region (a single-pixel template makes it a pixel indicator).
* ``LinearConvToyModel``  -- one convolution layer + per-pixel softmax head
  with analytic activation gradients for introspection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from .imaging import BinaryMask, ImageTensor

STAGE_BASE = "base"
STAGE_ENHANCED = "enhanced"
STAGE_MOBILE = "mobile"
_STAGES = (STAGE_BASE, STAGE_ENHANCED, STAGE_MOBILE)


class ModelError(RuntimeError):
    """Raised for contract violations or backend failures."""


@dataclass(frozen=True)
class ModelDescriptor:
    model_id: str
    stage_tag: str = STAGE_BASE
    input_channels: int | None = None

    def __post_init__(self) -> None:
        if self.stage_tag not in _STAGES:
            raise ModelError(f"stage_tag must be one of {_STAGES}, got {self.stage_tag!r}")


@dataclass(frozen=True)
class ScoreMapOutput:
    """Per-pixel class distribution of shape (K, H, W)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 3:
            raise ModelError(f"probs must be (K, H, W), got shape {arr.shape}")
        if arr.min() < -1e-9:
            raise ModelError("probabilities must be nonnegative")
        sums = arr.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-5):
            raise ModelError("per-pixel class distributions must sum to 1")
        object.__setattr__(self, "probs", arr)

    @property
    def classes(self) -> int:
        return self.probs.shape[0]

    @property
    def height(self) -> int:
        return self.probs.shape[1]

    @property
    def width(self) -> int:
        return self.probs.shape[2]

    def argmax_mask(self, category: int) -> BinaryMask:
        """Pixels whose argmax class is `category` (ties to the lowest index)."""
        return BinaryMask(np.argmax(self.probs, axis=0) == category)


@dataclass(frozen=True)
class IntrospectionRecord:
    """Feature maps of the designated layer and matching gradient maps."""

    activations: np.ndarray
    grads: np.ndarray

    def __post_init__(self) -> None:
        act = np.asarray(self.activations, dtype=np.float64)
        grads = np.asarray(self.grads, dtype=np.float64)
        if act.shape != grads.shape:
            raise ModelError("activations and grads must have identical shapes")
        object.__setattr__(self, "activations", act)
        object.__setattr__(self, "grads", grads)


@runtime_checkable
class SegmentationModel(Protocol):
    descriptor: ModelDescriptor
    concurrent_safe: bool

    def predict(self, img: ImageTensor) -> ScoreMapOutput: ...


def predict_scores(model: SegmentationModel, img: ImageTensor) -> ScoreMapOutput:
    """Forward pass with input-spec validation."""
    expected = model.descriptor.input_channels
    if expected is not None and img.channels != expected:
        raise ModelError(
            f"model {model.descriptor.model_id!r} expects {expected} channels, got {img.channels}"
        )
    return model.predict(img)


def scalarize_class_score(out: ScoreMapOutput, category: int, target_region: BinaryMask) -> float:
    """Mean class-`category` probability over the region (all pixels if empty)."""
    if not 0 <= category < out.classes:
        raise ModelError(f"unknown category index {category}")
    if target_region.bits.shape != (out.height, out.width):
        raise ModelError("target region dimensions do not match the output")
    plane = out.probs[category]
    if target_region.count() == 0:
        return float(plane.mean())
    return float(plane[target_region.bits].mean())


def freeze_target_region(model: SegmentationModel, img: ImageTensor, category: int) -> BinaryMask:
    """Argmax region of `category` on the clean image, reused across perturbations."""
    out = predict_scores(model, img)
    if not 0 <= category < out.classes:
        raise ModelError(f"unknown category index {category}")
    return out.argmax_mask(category)


def introspect_forward(
    model: SegmentationModel, img: ImageTensor, category: int
) -> tuple[ScoreMapOutput, IntrospectionRecord]:
    """Forward pass plus activations/gradients of the designated layer.

    Only models exposing an ``introspect`` method support this; black-box
    adapters do not.
    """
    introspect = getattr(model, "introspect", None)
    if introspect is None:
        raise ModelError(
            f"model {model.descriptor.model_id!r} does not support introspection"
        )
    return introspect(img, category)


def _intensity(img: ImageTensor) -> np.ndarray:
    return img.data.mean(axis=0)


class ConstantModel:
    """Same class distribution at every pixel, for every input."""

    def __init__(self, foreground: float = 0.7, model_id: str = "toy:constant"):
        if not 0.0 <= foreground <= 1.0:
            raise ModelError("foreground probability must lie in [0, 1]")
        self.foreground = float(foreground)
        self.descriptor = ModelDescriptor(model_id)
        self.concurrent_safe = True

    def predict(self, img: ImageTensor) -> ScoreMapOutput:
        probs = np.empty((2, img.height, img.width), dtype=np.float64)
        probs[0] = 1.0 - self.foreground
        probs[1] = self.foreground
        return ScoreMapOutput(probs)


class BrightnessToyModel:
    """P(foreground) per pixel equals the clamped channel-mean intensity."""

    def __init__(self, model_id: str = "toy:brightness"):
        self.descriptor = ModelDescriptor(model_id)
        self.concurrent_safe = True

    def predict(self, img: ImageTensor) -> ScoreMapOutput:
        fg = np.clip(_intensity(img), 0.0, 1.0)
        return ScoreMapOutput(np.stack([1.0 - fg, fg]))


class RegionTemplateModel:
    """Uniform P(foreground) = clamped mean intensity inside a fixed region."""

    def __init__(self, template: BinaryMask, model_id: str = "toy:region"):
        if template.count() == 0:
            raise ModelError("template region must be nonempty")
        self.template = template
        self.descriptor = ModelDescriptor(model_id)
        self.concurrent_safe = True

    def predict(self, img: ImageTensor) -> ScoreMapOutput:
        if (img.height, img.width) != (self.template.height, self.template.width):
            raise ModelError("image dimensions do not match the template region")
        score = float(np.clip(_intensity(img)[self.template.bits].mean(), 0.0, 1.0))
        probs = np.empty((2, img.height, img.width), dtype=np.float64)
        probs[0] = 1.0 - score
        probs[1] = score
        return ScoreMapOutput(probs)


class LinearConvToyModel:
    """One 'same'-padded convolution layer, linear class head, per-pixel softmax.

    Activations A_k = conv(img, w_k). Per-pixel logits l_c(x) = sum_k
    head[c, k] * A_k(x) + bias[c]; probabilities are the per-pixel softmax.
    The introspection scalar is the mean class-c probability over all
    pixels, whose gradient w.r.t. the activations is analytic:

        d s_c / d A_k(x) = p_c(x) * (head[c, k] - sum_c' head[c', k] p_c'(x)) / (H * W)
    """

    def __init__(
        self,
        filters: np.ndarray,
        head: np.ndarray,
        bias: np.ndarray | None = None,
        model_id: str = "toy:linear-conv",
    ):
        self.filters = np.asarray(filters, dtype=np.float64)  # (K, C, kh, kw)
        if self.filters.ndim != 4:
            raise ModelError("filters must have shape (K, C, kh, kw)")
        self.head = np.asarray(head, dtype=np.float64)  # (n_classes, K)
        if self.head.ndim != 2 or self.head.shape[1] != self.filters.shape[0]:
            raise ModelError("head must have shape (n_classes, K)")
        self.bias = (
            np.zeros(self.head.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
        )
        self.descriptor = ModelDescriptor(model_id, input_channels=self.filters.shape[1])
        self.concurrent_safe = True

    @classmethod
    def seeded(cls, channels: int = 1, features: int = 3, classes: int = 2, seed: int = 0):
        rng = np.random.default_rng(seed)
        filters = rng.normal(scale=0.5, size=(features, channels, 3, 3))
        head = rng.normal(scale=1.0, size=(classes, features))
        bias = rng.normal(scale=0.1, size=classes)
        return cls(filters, head, bias)

    def activations(self, img: ImageTensor) -> np.ndarray:
        if img.channels != self.filters.shape[1]:
            raise ModelError(
                f"model expects {self.filters.shape[1]} channels, got {img.channels}"
            )
        maps = []
        for k in range(self.filters.shape[0]):
            acc = np.zeros((img.height, img.width))
            for c in range(self.filters.shape[1]):
                acc += ndimage.correlate(img.data[c], self.filters[k, c], mode="constant")
            maps.append(acc)
        return np.stack(maps)

    def _probs_from_activations(self, acts: np.ndarray) -> np.ndarray:
        logits = np.tensordot(self.head, acts, axes=([1], [0])) + self.bias[:, None, None]
        logits -= logits.max(axis=0, keepdims=True)
        expl = np.exp(logits)
        return expl / expl.sum(axis=0, keepdims=True)

    def predict(self, img: ImageTensor) -> ScoreMapOutput:
        return ScoreMapOutput(self._probs_from_activations(self.activations(img)))

    def score_from_activations(self, acts: np.ndarray, category: int) -> float:
        """Mean class-`category` probability; the quantity introspection differentiates."""
        probs = self._probs_from_activations(np.asarray(acts, dtype=np.float64))
        if not 0 <= category < probs.shape[0]:
            raise ModelError(f"unknown category index {category}")
        return float(probs[category].mean())

    def introspect(self, img: ImageTensor, category: int) -> tuple[ScoreMapOutput, IntrospectionRecord]:
        acts = self.activations(img)
        probs = self._probs_from_activations(acts)
        if not 0 <= category < probs.shape[0]:
            raise ModelError(f"unknown category index {category}")
        n = probs.shape[1] * probs.shape[2]
        p_c = probs[category]
        # d p_c(x) / d A_k(x) via the softmax Jacobian, then the 1/(H*W) mean.
        weighted = np.tensordot(self.head, probs, axes=([0], [0]))  # (K, H, W)
        grads = p_c[None, :, :] * (self.head[category][:, None, None] - weighted) / n
        return ScoreMapOutput(probs), IntrospectionRecord(acts, grads)
