"""COCO-style dataset parsing, mask building, splitting, and re-emission.

Only the polygon subset of COCO is supported: top-level ``images``,
``categories``, and ``annotations`` arrays where every segmentation is a
list of flat ``[x1, y1, x2, y2, ...]`` polygons. Void annotations are
encoded with a reserved category named ``void`` holding the highest
category id; they are excluded from ground-truth masks and metrics.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .imaging import BinaryMask, rasterize_polygon

VOID_CATEGORY_NAME = "void"

Polygon = list[tuple[float, float]]


class DatasetError(ValueError):
    """Raised for malformed or referentially broken dataset documents."""


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    polygons: tuple[tuple[tuple[float, float], ...], ...]
    is_void: bool = False


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageInfo, ...]
    categories: tuple[Category, ...]
    annotations: tuple[Annotation, ...]
    image_root: str = ""

    def image(self, image_id: int) -> ImageInfo:
        for im in self.images:
            if im.id == image_id:
                return im
        raise DatasetError(f"unknown image id {image_id}")

    def category(self, category_id: int) -> Category:
        for cat in self.categories:
            if cat.id == category_id:
                return cat
        raise DatasetError(f"unknown category id {category_id}")

    def void_category_id(self) -> int | None:
        for cat in self.categories:
            if cat.name == VOID_CATEGORY_NAME:
                return cat.id
        return None

    def annotations_for_image(self, image_id: int) -> list[Annotation]:
        return [a for a in self.annotations if a.image_id == image_id]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 42

    def __post_init__(self) -> None:
        if not 0 < self.train_fraction < 1:
            raise DatasetError("train_fraction must lie strictly between 0 and 1")


def _parse_polygons(segmentation: object, ann_id: object) -> tuple[tuple[tuple[float, float], ...], ...]:
    if isinstance(segmentation, dict) or (
        isinstance(segmentation, list) and segmentation and isinstance(segmentation[0], dict)
    ):
        raise DatasetError(
            f"annotation {ann_id}: RLE segmentations are not supported, only polygon lists"
        )
    if not isinstance(segmentation, list):
        raise DatasetError(f"annotation {ann_id}: segmentation must be a list of polygons")
    polygons = []
    for flat in segmentation:
        if not isinstance(flat, list) or len(flat) < 6 or len(flat) % 2 != 0:
            raise DatasetError(
                f"annotation {ann_id}: polygon needs at least 3 (x, y) vertices"
            )
        if any(not math.isfinite(float(v)) for v in flat):
            raise DatasetError(f"annotation {ann_id}: polygon has non-finite coordinates")
        polygons.append(tuple((float(flat[i]), float(flat[i + 1])) for i in range(0, len(flat), 2)))
    return tuple(polygons)


def parse_dataset(document: bytes | str, image_root: str = "") -> Dataset:
    """Parse a COCO-style JSON document into a fully linked Dataset."""
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed JSON: {exc}") from exc
    for key in ("images", "categories", "annotations"):
        if key not in raw or not isinstance(raw[key], list):
            raise DatasetError(f"document is missing the {key!r} array")

    images = []
    for im in raw["images"]:
        if int(im["width"]) <= 0 or int(im["height"]) <= 0:
            raise DatasetError(f"image {im['id']}: non-positive dimensions")
        images.append(
            ImageInfo(int(im["id"]), str(im.get("file_name", "")), int(im["width"]), int(im["height"]))
        )
    categories = [Category(int(c["id"]), str(c["name"])) for c in raw["categories"]]

    image_ids = {im.id for im in images}
    category_ids = {c.id for c in categories}
    if len(image_ids) != len(images):
        raise DatasetError("duplicate image ids")
    if len(category_ids) != len(categories):
        raise DatasetError("duplicate category ids")
    void_ids = {c.id for c in categories if c.name == VOID_CATEGORY_NAME}

    annotations = []
    for ann in raw["annotations"]:
        ann_id = ann["id"]
        image_id = int(ann["image_id"])
        category_id = int(ann["category_id"])
        if image_id not in image_ids:
            raise DatasetError(f"annotation {ann_id}: dangling image_id {image_id}")
        if category_id not in category_ids:
            raise DatasetError(f"annotation {ann_id}: dangling category_id {category_id}")
        annotations.append(
            Annotation(
                id=int(ann_id),
                image_id=image_id,
                category_id=category_id,
                polygons=_parse_polygons(ann["segmentation"], ann_id),
                is_void=category_id in void_ids,
            )
        )
    return Dataset(tuple(images), tuple(categories), tuple(annotations), image_root)


def write_dataset(ds: Dataset) -> bytes:
    """Emit the canonical COCO-style JSON document (sorted keys and records)."""
    doc = {
        "images": [
            {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
            for im in sorted(ds.images, key=lambda im: im.id)
        ],
        "categories": [
            {"id": c.id, "name": c.name} for c in sorted(ds.categories, key=lambda c: c.id)
        ],
        "annotations": [
            {
                "id": a.id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "segmentation": [
                    [coord for vertex in poly for coord in vertex] for poly in a.polygons
                ],
            }
            for a in sorted(ds.annotations, key=lambda a: a.id)
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def dataset_digest(ds: Dataset) -> str:
    """Stable content digest of the canonical document."""
    return hashlib.sha256(write_dataset(ds)).hexdigest()


def rasterize_annotation(ann: Annotation, height: int, width: int) -> BinaryMask:
    """Union of an annotation's polygons on the image grid."""
    bits = np.zeros((height, width), dtype=bool)
    for poly in ann.polygons:
        bits |= rasterize_polygon(poly, height, width).bits
    return BinaryMask(bits)


def build_category_masks(ds: Dataset, image_id: int, category_id: int) -> BinaryMask:
    """Ground-truth mask: union over the image's annotations of one category.

    Void annotations never contribute.
    """
    image = ds.image(image_id)
    ds.category(category_id)
    bits = np.zeros((image.height, image.width), dtype=bool)
    for ann in ds.annotations_for_image(image_id):
        if ann.category_id != category_id or ann.is_void:
            continue
        bits |= rasterize_annotation(ann, image.height, image.width).bits
    return BinaryMask(bits)


def labeled_mask_for_image(ds: Dataset, image_id: int) -> BinaryMask:
    """Union of all non-void annotation masks on an image."""
    image = ds.image(image_id)
    bits = np.zeros((image.height, image.width), dtype=bool)
    for ann in ds.annotations_for_image(image_id):
        if ann.is_void:
            continue
        bits |= rasterize_annotation(ann, image.height, image.width).bits
    return BinaryMask(bits)


def void_mask_for_image(ds: Dataset, image_id: int) -> BinaryMask:
    """Void-region mask with labeled pixels clipped out."""
    image = ds.image(image_id)
    bits = np.zeros((image.height, image.width), dtype=bool)
    for ann in ds.annotations_for_image(image_id):
        if not ann.is_void:
            continue
        bits |= rasterize_annotation(ann, image.height, image.width).bits
    return BinaryMask(bits & ~labeled_mask_for_image(ds, image_id).bits)


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded per-image split; train receives ceil(fraction * n) images."""
    if not ds.images:
        raise DatasetError("cannot split an empty dataset")
    ids = sorted(im.id for im in ds.images)
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train = math.ceil(spec.train_fraction * len(ids))
    train_ids = set(shuffled[:n_train])

    def subset(keep: set[int]) -> Dataset:
        images = tuple(im for im in ds.images if im.id in keep)
        annotations = tuple(a for a in ds.annotations if a.image_id in keep)
        return Dataset(images, ds.categories, annotations, ds.image_root)

    val_ids = set(shuffled[n_train:])
    return subset(train_ids), subset(val_ids)


def ensure_void_category(ds: Dataset) -> tuple[Dataset, int]:
    """Return a dataset guaranteed to carry the reserved void category."""
    existing = ds.void_category_id()
    if existing is not None:
        return ds, existing
    new_id = max((c.id for c in ds.categories), default=0) + 1
    categories = ds.categories + (Category(new_id, VOID_CATEGORY_NAME),)
    return replace(ds, categories=categories), new_id
