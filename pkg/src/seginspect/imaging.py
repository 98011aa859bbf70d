"""Image, mask, and saliency primitives shared across the toolkit.

All values are plain numpy arrays wrapped in light dataclasses; every
operation is pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

RANGE_RAW255 = "raw255"
RANGE_UNIT = "unit"
RANGE_NORMALIZED = "normalized"

_RANGE_TAGS = (RANGE_RAW255, RANGE_UNIT, RANGE_NORMALIZED)

# Channel statistics conventionally used for RGB inputs.
DEFAULT_MEAN = (0.485, 0.456, 0.406)
DEFAULT_STD = (0.229, 0.224, 0.225)


class ImagingError(ValueError):
    """Raised when an imaging precondition is violated."""


@dataclass(frozen=True)
class ImageTensor:
    """Channel-major float image of shape (C, H, W) with a value-range tag."""

    data: np.ndarray
    range_tag: str = RANGE_UNIT

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ImagingError(f"image data must be (C, H, W), got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ImagingError("image contains non-finite values")
        if self.range_tag not in _RANGE_TAGS:
            raise ImagingError(f"unknown range tag {self.range_tag!r}")
        if self.range_tag == RANGE_RAW255 and (arr.min() < 0 or arr.max() > 255):
            raise ImagingError("raw255 image has values outside [0, 255]")
        if self.range_tag == RANGE_UNIT and (arr.min() < -1e-9 or arr.max() > 1 + 1e-9):
            raise ImagingError("unit image has values outside [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-channel mean/std used to standardize unit-range images."""

    mean: tuple[float, ...] = DEFAULT_MEAN
    std: tuple[float, ...] = DEFAULT_STD

    def __post_init__(self) -> None:
        if len(self.mean) != len(self.std):
            raise ImagingError("mean and std must have equal length")
        if any(s <= 0 for s in self.std):
            raise ImagingError("std values must be positive")


@dataclass(frozen=True)
class BinaryMask:
    """Row-major boolean grid aligned to an image."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits, dtype=bool)
        if arr.ndim != 2:
            raise ImagingError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class SaliencyMap:
    """Per-category relevance grid aligned to an image."""

    category: int
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ImagingError(f"saliency must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ImagingError("saliency contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BBoxRect:
    """Axis-aligned rectangle in pixel indices, all bounds inclusive."""

    row_min: int
    row_max: int
    col_min: int
    col_max: int

    def __post_init__(self) -> None:
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ImagingError("degenerate bbox: min exceeds max")

    def area(self) -> int:
        return (self.row_max - self.row_min + 1) * (self.col_max - self.col_min + 1)


def normalize_image(img: ImageTensor, spec: NormalizationSpec) -> ImageTensor:
    """Standardize a raw [0, 255] image: out = (v/255 - mean) / std per channel."""
    if img.range_tag != RANGE_RAW255:
        raise ImagingError(f"normalize_image expects a raw255 image, got {img.range_tag!r}")
    if len(spec.mean) != img.channels:
        raise ImagingError(
            f"normalization spec has {len(spec.mean)} channels, image has {img.channels}"
        )
    mean = np.asarray(spec.mean, dtype=np.float64)[:, None, None]
    std = np.asarray(spec.std, dtype=np.float64)[:, None, None]
    out = (img.data / 255.0 - mean) / std
    return ImageTensor(out, RANGE_NORMALIZED)


def denormalize_image(img: ImageTensor, spec: NormalizationSpec) -> ImageTensor:
    """Inverse of normalize_image, back to the raw [0, 255] range."""
    if img.range_tag != RANGE_NORMALIZED:
        raise ImagingError("denormalize_image expects a normalized image")
    mean = np.asarray(spec.mean, dtype=np.float64)[:, None, None]
    std = np.asarray(spec.std, dtype=np.float64)[:, None, None]
    out = np.clip((img.data * std + mean) * 255.0, 0.0, 255.0)
    return ImageTensor(out, RANGE_RAW255)


def _bilinear_axis_indices(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel-center source coordinates, clamped at the edges.
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img: ImageTensor, out_h: int, out_w: int) -> ImageTensor:
    """Resample with bilinear interpolation (half-pixel centers, edge clamp)."""
    if out_h < 1 or out_w < 1:
        raise ImagingError("target dimensions must be >= 1")
    if (out_h, out_w) == (img.height, img.width):
        return img
    out = ImageTensor(resize_bilinear_array(img.data, out_h, out_w), img.range_tag)
    return out


def resize_bilinear_array(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """resize_bilinear on a bare (..., H, W) array."""
    data = np.asarray(data, dtype=np.float64)
    h, w = data.shape[-2], data.shape[-1]
    r_lo, r_hi, r_f = _bilinear_axis_indices(h, out_h)
    c_lo, c_hi, c_f = _bilinear_axis_indices(w, out_w)
    top = data[..., r_lo, :]
    bot = data[..., r_hi, :]
    rows = top + (bot - top) * r_f[:, None]
    left = rows[..., :, c_lo]
    right = rows[..., :, c_hi]
    return left + (right - left) * c_f


def gaussian_blur(img: ImageTensor, sigma: float) -> ImageTensor:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), reflect padding."""
    if sigma < 0:
        raise ImagingError("sigma must be >= 0")
    if sigma == 0:
        return img
    blurred = gaussian_blur_array(img.data, sigma)
    if img.range_tag in (RANGE_RAW255, RANGE_UNIT):
        hi = 255.0 if img.range_tag == RANGE_RAW255 else 1.0
        blurred = np.clip(blurred, 0.0, hi)
    return ImageTensor(blurred, img.range_tag)


def gaussian_blur_array(data: np.ndarray, sigma: float) -> np.ndarray:
    """gaussian_blur on a bare (..., H, W) array, no range clamping."""
    if sigma < 0:
        raise ImagingError("sigma must be >= 0")
    data = np.asarray(data, dtype=np.float64)
    if sigma == 0:
        return data.copy()
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    kernel /= kernel.sum()
    # scipy's 'reflect' is edge-repeating (symmetric) reflection, which keeps
    # the total mass of the image exactly.
    out = ndimage.convolve1d(data, kernel, axis=-2, mode="reflect")
    out = ndimage.convolve1d(out, kernel, axis=-1, mode="reflect")
    return out


def rasterize_polygon(poly: Sequence[tuple[float, float]], h: int, w: int) -> BinaryMask:
    """Fill a polygon on an h x w grid.

    A pixel is set iff its center (integer coordinates, x=col, y=row) is
    inside the polygon under the even-odd rule; centers exactly on an edge
    count as inside.
    """
    pts = np.asarray(poly, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ImagingError("polygon needs at least 3 (x, y) vertices")
    if not np.isfinite(pts).all():
        raise ImagingError("polygon has non-finite coordinates")

    xs = pts[:, 0]
    ys = pts[:, 1]
    nxt = np.roll(np.arange(len(pts)), -1)
    x1, y1 = xs, ys
    x2, y2 = xs[nxt], ys[nxt]

    px = np.arange(w, dtype=np.float64)[None, :, None]  # (1, W, E)
    py = np.arange(h, dtype=np.float64)[:, None, None]  # (H, 1, E)

    # Even-odd crossing count against a ray toward +x.
    cond = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    crossing = cond & (px < x_at)
    inside = crossing.sum(axis=2) % 2 == 1

    # Centers exactly on an edge segment are inside by convention.
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    within = (
        (px >= np.minimum(x1, x2))
        & (px <= np.maximum(x1, x2))
        & (py >= np.minimum(y1, y2))
        & (py <= np.maximum(y1, y2))
    )
    on_edge = ((cross == 0) & within).any(axis=2)

    return BinaryMask(inside | on_edge)


def dilate_mask(mask: BinaryMask, radius: int) -> BinaryMask:
    """Dilate with a square structuring element of side 2*radius + 1."""
    if radius < 0:
        raise ImagingError("radius must be >= 0")
    if radius == 0 or not mask.bits.any():
        return BinaryMask(mask.bits.copy())
    footprint = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return BinaryMask(ndimage.binary_dilation(mask.bits, structure=footprint))


def topk_binarize(sal: SaliencyMap, k: int) -> BinaryMask:
    """Mask of the k largest saliency values; ties break by row-major index."""
    total = sal.height * sal.width
    if not 0 <= k <= total:
        raise ImagingError(f"k={k} out of range [0, {total}]")
    flat = sal.values.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    bits = np.zeros(total, dtype=bool)
    bits[order[:k]] = True
    return BinaryMask(bits.reshape(sal.height, sal.width))


def bbox_of_mask(mask: BinaryMask) -> BBoxRect:
    """Tightest axis-aligned rectangle containing all set pixels."""
    rows = np.flatnonzero(mask.bits.any(axis=1))
    cols = np.flatnonzero(mask.bits.any(axis=0))
    if rows.size == 0:
        raise ImagingError("bbox of an empty mask is undefined")
    return BBoxRect(int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1]))


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant map normalizes to all zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi > lo:
        return (values - lo) / (hi - lo)
    return np.zeros_like(values)
