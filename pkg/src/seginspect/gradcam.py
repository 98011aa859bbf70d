"""Gradient-weighted activation mapping over the introspection interface."""

from __future__ import annotations

import numpy as np

from .explain import ExplainResult, config_digest
from .imaging import ImageTensor, SaliencyMap, minmax_normalize, resize_bilinear_array
from .models import IntrospectionRecord, SegmentationModel, introspect_forward


def gradcam_map_from_record(record: IntrospectionRecord, out_h: int, out_w: int) -> np.ndarray:
    """Channel weights = spatial gradient means; map = normalized ReLU of the
    weighted activation sum, bilinearly upsampled to the image grid."""
    alphas = record.grads.mean(axis=(1, 2))
    combined = np.tensordot(alphas, record.activations, axes=([0], [0]))
    rectified = np.maximum(combined, 0.0)
    upsampled = resize_bilinear_array(rectified, out_h, out_w)
    return minmax_normalize(upsampled)


def explain_gradcam(model: SegmentationModel, img: ImageTensor, category: int) -> ExplainResult:
    """Saliency for models that expose layer activations and gradients."""
    _, record = introspect_forward(model, img, category)
    values = gradcam_map_from_record(record, img.height, img.width)
    return ExplainResult(
        saliency=SaliencyMap(category=category, values=values),
        method="gradcam",
        config_digest=config_digest({"method": "gradcam"}),
        model=model.descriptor,
        seed=0,
    )
