"""Randomized-mask attribution for black-box segmentation models.

The map accumulates masked-forward scores over random (or exhaustively
enumerated) occlusion masks:

    S(x) = sum_i f(I * M_i) * M_i(x) / (E[M] * N)

where f is the scalar class score on a target region frozen from the clean
image's prediction and E[M] is the empirical scalar mean of all mask
values (exactly the keep probability under full enumeration).

Monte-carlo masks are Bernoulli cell grids bilinearly sampled on a lattice
shifted by an integer sub-cell offset; when the cell size is 1 the masks
are exactly the binary grids, making the estimator unbiased for the
exhaustive map.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .explain import ExplainResult, config_digest
from .imaging import BinaryMask, ImageTensor, SaliencyMap
from .models import SegmentationModel, freeze_target_region, predict_scores, scalarize_class_score

MODE_MONTE_CARLO = "monte_carlo"
MODE_EXHAUSTIVE = "exhaustive"

# Masks are scored in fixed-size chunks and the partial sums reduced in
# chunk order, so results are bit-identical for any worker count.
_CHUNK = 64


class RiseError(RuntimeError):
    pass


@dataclass(frozen=True)
class RiseConfig:
    n_masks: int = 4000
    grid: int = 7
    keep_prob: float = 0.5
    out_h: int | None = None
    out_w: int | None = None
    seed: int = 42
    mode: str = MODE_MONTE_CARLO

    def __post_init__(self) -> None:
        if self.grid < 1:
            raise RiseError("grid must be >= 1")
        if self.mode == MODE_MONTE_CARLO:
            if not 0.0 < self.keep_prob < 1.0:
                raise RiseError("keep_prob must lie strictly between 0 and 1")
            if self.n_masks < 1:
                raise RiseError("n_masks must be >= 1")
        elif self.mode == MODE_EXHAUSTIVE:
            if self.grid * self.grid > 16:
                raise RiseError("exhaustive mode requires grid*grid <= 16")
        else:
            raise RiseError(f"unknown mode {self.mode!r}")

    def resolved_dims(self, img: ImageTensor | None = None) -> tuple[int, int]:
        h = self.out_h if self.out_h is not None else (img.height if img else None)
        w = self.out_w if self.out_w is not None else (img.width if img else None)
        if h is None or w is None:
            raise RiseError("output dimensions are unset and no image was given")
        return int(h), int(w)

    def mask_count(self) -> int:
        if self.mode == MODE_EXHAUSTIVE:
            return 2 ** (self.grid * self.grid)
        return self.n_masks

    def digest_payload(self) -> dict:
        return {
            "n_masks": self.n_masks,
            "grid": self.grid,
            "keep_prob": self.keep_prob,
            "out_h": self.out_h,
            "out_w": self.out_w,
            "seed": self.seed,
            "mode": self.mode,
        }


def _sample_shifted_grid(
    grid: np.ndarray, h: int, w: int, cell_h: int, cell_w: int, dr: int, dc: int
) -> np.ndarray:
    # Bilinear sample of the cell grid on a half-pixel lattice shifted by an
    # integer sub-cell offset; coordinates clamp at the grid edges.
    s = grid.shape[0]
    u = (np.arange(h, dtype=np.float64) + 0.5 + dr) / cell_h - 0.5
    v = (np.arange(w, dtype=np.float64) + 0.5 + dc) / cell_w - 0.5
    u = np.clip(u, 0.0, s - 1.0)
    v = np.clip(v, 0.0, s - 1.0)
    u_lo = np.floor(u).astype(np.intp)
    v_lo = np.floor(v).astype(np.intp)
    u_hi = np.minimum(u_lo + 1, s - 1)
    v_hi = np.minimum(v_lo + 1, s - 1)
    uf = (u - u_lo)[:, None]
    vf = (v - v_lo)[None, :]
    top = grid[u_lo][:, v_lo] * (1 - vf) + grid[u_lo][:, v_hi] * vf
    bot = grid[u_hi][:, v_lo] * (1 - vf) + grid[u_hi][:, v_hi] * vf
    return top * (1 - uf) + bot * uf


def iter_rise_masks(
    cfg: RiseConfig, h: int, w: int, chunk: int = _CHUNK
) -> Iterator[np.ndarray]:
    """Yield masks in fixed-size chunks; the stream is chunk-size invariant."""
    s = cfg.grid
    if cfg.mode == MODE_EXHAUSTIVE:
        cell_h = math.ceil(h / s)
        cell_w = math.ceil(w / s)
        rows = np.minimum(np.arange(h) // cell_h, s - 1)
        cols = np.minimum(np.arange(w) // cell_w, s - 1)
        total = cfg.mask_count()
        for start in range(0, total, chunk):
            count = min(chunk, total - start)
            out = np.empty((count, h, w), dtype=np.float64)
            for j in range(count):
                index = start + j
                bits = (index >> (np.arange(s * s))) & 1
                grid = bits.reshape(s, s).astype(np.float64)
                out[j] = grid[rows][:, cols]
            yield out
        return

    cell_h = math.ceil(h / s)
    cell_w = math.ceil(w / s)
    rng = np.random.default_rng(cfg.seed)
    remaining = cfg.n_masks
    while remaining > 0:
        count = min(chunk, remaining)
        out = np.empty((count, h, w), dtype=np.float64)
        for j in range(count):
            # One grid draw then one shift draw per mask keeps the RNG stream
            # identical for any chunk size.
            grid = (rng.random((s, s)) < cfg.keep_prob).astype(np.float64)
            dr = int(rng.integers(0, cell_h))
            dc = int(rng.integers(0, cell_w))
            out[j] = _sample_shifted_grid(grid, h, w, cell_h, cell_w, dr, dc)
        yield out
        remaining -= count


def generate_rise_masks(cfg: RiseConfig, h: int | None = None, w: int | None = None) -> np.ndarray:
    """Materialize every mask as one (N, H, W) array in [0, 1].

    Intended for inspection and small configurations; large maps should go
    through ``explain_rise``, which streams masks in chunks.
    """
    if h is None or w is None:
        h, w = cfg.resolved_dims()
    return np.concatenate(list(iter_rise_masks(cfg, h, w)), axis=0)


def explain_rise(
    model: SegmentationModel,
    img: ImageTensor,
    category: int,
    cfg: RiseConfig,
    target_region: BinaryMask | None = None,
    jobs: int = 1,
) -> ExplainResult:
    """Attribution map for `category` using only black-box forward passes."""
    h, w = cfg.resolved_dims(img)
    if (h, w) != (img.height, img.width):
        raise RiseError(
            f"config dims ({h}, {w}) do not match image dims ({img.height}, {img.width})"
        )
    if target_region is None:
        target_region = freeze_target_region(model, img, category)

    def score_chunk(masks: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
        scores = np.empty(masks.shape[0], dtype=np.float64)
        for j in range(masks.shape[0]):
            masked = ImageTensor(img.data * masks[j], img.range_tag)
            out = predict_scores(model, masked)
            scores[j] = scalarize_class_score(out, category, target_region)
        partial = np.einsum("n,nhw->hw", scores, masks)
        return partial, float(masks.sum()), scores

    chunks = iter_rise_masks(cfg, h, w)
    partials: list[np.ndarray] = []
    mask_total = 0.0
    workers = max(1, int(jobs))
    if workers > 1 and getattr(model, "concurrent_safe", False):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for partial, msum, _ in pool.map(score_chunk, chunks):
                partials.append(partial)
                mask_total += msum
    else:
        for masks in chunks:
            partial, msum, _ = score_chunk(masks)
            partials.append(partial)
            mask_total += msum

    n = cfg.mask_count()
    mask_mean = mask_total / (n * h * w)
    if mask_mean == 0.0:
        raise RiseError("all masks are zero; cannot normalize the map")

    acc = np.zeros((h, w), dtype=np.float64)
    for partial in partials:  # ordered fold
        acc += partial
    values = acc / (mask_mean * n)
    saliency = SaliencyMap(category=category, values=values)
    return ExplainResult(
        saliency=saliency,
        method="rise",
        config_digest=config_digest(cfg.digest_payload()),
        model=model.descriptor,
        seed=cfg.seed,
    )
