"""Moore-neighbor contour tracing for deriving polygons from binary masks.

Traced polygons pass through boundary pixel centers, so rasterizing them
with the inclusive even-odd rule reproduces the mask (enclosed holes are
filled; COCO polygon lists cannot represent holes).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .imaging import BinaryMask

# Clockwise Moore neighborhood starting east: (dr, dc).
_MOORE = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)]
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def _trace_component(bits: np.ndarray, start: tuple[int, int]) -> list[tuple[int, int]]:
    h, w = bits.shape

    def is_set(rc: tuple[int, int]) -> bool:
        r, c = rc
        return 0 <= r < h and 0 <= c < w and bool(bits[r, c])

    contour = [start]
    p = start
    # start is the row-major first pixel, so its west neighbor is background.
    b = (start[0], start[1] - 1)
    first_move: tuple[int, int] | None = None
    max_steps = 8 * int(bits.sum()) + 16
    for _ in range(max_steps):
        offset = (b[0] - p[0], b[1] - p[1])
        i0 = _MOORE_INDEX[offset]
        found = None
        prev = b
        for k in range(1, 9):
            d = _MOORE[(i0 + k) % 8]
            cand = (p[0] + d[0], p[1] + d[1])
            if is_set(cand):
                found = cand
                break
            prev = cand
        if found is None:
            return [start]  # isolated pixel
        if p == start and first_move is None:
            first_move = found
        elif p == start and found == first_move:
            # Completed the loop; the trailing re-entry of start is redundant.
            return contour[:-1] if contour[-1] == start else contour
        contour.append(found)
        b = prev  # last background cell examined; 8-adjacent to found
        p = found
    return contour


def trace_mask_polygons(mask: BinaryMask) -> list[list[tuple[float, float]]]:
    """Outer boundary polygon (x, y vertex list) per 8-connected component.

    Vertices are pixel centers. Short contours are padded by repeating the
    last vertex so every polygon stays COCO-valid (>= 3 vertices).
    """
    labels, n = ndimage.label(mask.bits, structure=np.ones((3, 3), dtype=bool))
    polygons: list[list[tuple[float, float]]] = []
    for comp in range(1, n + 1):
        comp_bits = labels == comp
        rows, cols = np.nonzero(comp_bits)
        start = (int(rows[0]), int(cols[0]))
        path = _trace_component(comp_bits, start)
        poly = [(float(c), float(r)) for r, c in path]
        while len(poly) < 3:
            poly.append(poly[-1])
        polygons.append(poly)
    return polygons
