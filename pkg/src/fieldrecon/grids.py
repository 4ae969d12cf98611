"""Pixel-lattice machinery shared by the topology and partition code.

Regions are boolean masks over the field grid (one pixel per grid node).
Separating curves are closed polylines; a pixel belongs to a side of a
curve by even-odd ray parity of its center, so region masks always tile
the domain exactly and splits are immune to pixel-width pinching.

Connectivity conventions: 4-connectivity for masks, 8-connectivity for the
complement when counting holes.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(mask):
    """Plain 4-connected labeling. Returns (labels, count)."""
    lab, n = ndimage.label(mask, structure=FOUR)
    return lab.astype(np.int32), n


def point_in_polylines(point, polylines):
    """Even-odd parity of a point against a list of closed xy polylines."""
    x, y = point
    inside = False
    for poly in polylines:
        x1 = poly[:-1, 0]
        y1 = poly[:-1, 1]
        x2 = poly[1:, 0]
        y2 = poly[1:, 1]
        straddle = (y1 > y) != (y2 > y)
        if not straddle.any():
            continue
        xs = x1[straddle] + (y - y1[straddle]) * (x2[straddle] - x1[straddle]) / (
            y2[straddle] - y1[straddle]
        )
        if int(np.count_nonzero(xs > x)) % 2:
            inside = not inside
    return inside


def polyline_interior_mask(poly_px, shape):
    """Even-odd interior of one closed polyline, sampled at pixel centers.

    Same ray convention as point_in_polylines: pixel (r, c) is inside when
    the ray x > c at height r crosses the curve an odd number of times.
    """
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    row_hits = {}
    for (x1, y1), (x2, y2) in zip(poly_px[:-1], poly_px[1:]):
        if y1 == y2:
            continue
        lo, hi = (y1, y2) if y1 < y2 else (y2, y1)
        for r in range(int(np.ceil(lo)), int(np.ceil(hi))):
            if (y1 > r) == (y2 > r):
                continue
            xc = x1 + (r - y1) * (x2 - x1) / (y2 - y1)
            row_hits.setdefault(r, []).append(xc)
    cols = np.arange(w)
    for r, xs in row_hits.items():
        if not (0 <= r < h):
            continue
        xs = np.sort(np.asarray(xs))
        cnt = len(xs) - np.searchsorted(xs, cols, side="right")
        out[r] = (cnt % 2) == 1
    return out


def euler_characteristic(mask):
    """Euler characteristic of a pixel set: 4-components minus 8-holes.

    Holes are 8-connected components of the complement that do not reach the
    (padded) outer frame. For a connected region this equals 1 - #holes.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask has no Euler characteristic")
    _, ncomp = ndimage.label(mask, structure=FOUR)
    padded = np.pad(~mask, 1, constant_values=True)
    _, nbg = ndimage.label(padded, structure=EIGHT)
    # the frame belongs to exactly one background component
    return int(ncomp - (nbg - 1))


def mask_bbox(mask, margin=1):
    """Bounding slice pair of a mask, padded by ``margin`` inside the grid."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0 = max(int(rows[0]) - margin, 0)
    r1 = min(int(rows[-1]) + margin + 1, mask.shape[0])
    c0 = max(int(cols[0]) - margin, 0)
    c1 = min(int(cols[-1]) + margin + 1, mask.shape[1])
    return slice(r0, r1), slice(c0, c1)


def point_to_pixel(x, y, n):
    """Nearest grid node (row, col) for a unit-square point."""
    j = int(round(x * (n - 1)))
    i = int(round(y * (n - 1)))
    return min(max(i, 0), n - 1), min(max(j, 0), n - 1)


def points_to_pixels(points, n):
    """Vectorized nearest-node lookup; points is (k, 2) xy."""
    p = np.asarray(points, dtype=float)
    ij = np.rint(p[:, ::-1] * (n - 1)).astype(np.int64)
    np.clip(ij, 0, n - 1, out=ij)
    return ij
