"""The evolving data-induced partition: cells of the domain minus mapped
isolines and discovered extremum points.

Mapped isolines on these fields are closed level curves of one function,
so the curves of a session form a laminar family: a new loop lies inside
exactly one cell, and splitting that cell means separating the pixels
inside the loop from those outside it (even-odd parity of pixel centers).
Cells keep every pixel, the partition refines exactly, and measures are
conserved.

Each cell is a node of the laminar forest: the region between its
bounding loop and its immediate child loops, minus its punctured extremum
pixels. Its Euler characteristic is therefore structural,

    chi = 1 - (number of child loops) - (number of punctures),

which is the continuum value, exact no matter how thinly the pixel mask
pinches. Updates are functional: operations return a new DataPartition
and old versions stay valid for replay.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import grids


class ConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class Cell:
    id: int
    bbox: tuple  # (row slice, col slice)
    mask: np.ndarray  # cropped to bbox
    area_px: int
    child_probes: tuple  # one vertex (pixel units) of each child loop
    punctures: tuple  # (row, col) of discovered extrema inside

    @property
    def chi(self):
        return 1 - len(self.child_probes) - len(self.punctures)


@dataclass(frozen=True)
class DataPartition:
    shape: tuple
    cells: tuple
    labels: np.ndarray  # 0 on punctured pixels, else cell id
    mapped_isolines: tuple
    discovered: tuple  # CriticalPoint records, insertion order
    step: int = 0
    next_id: int = 2
    violations: tuple = ()

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def covered_px(self):
        return self.labels.size - len(self.discovered)

    def cell_by_id(self, cid):
        for cell in self.cells:
            if cell.id == cid:
                return cell
        raise KeyError(cid)

    def area_fractions(self):
        return np.array([c.area_px for c in self.cells], dtype=float) / self.labels.size

    def cell_of_point(self, x, y):
        i, j = grids.point_to_pixel(x, y, self.shape[0])
        return int(self.labels[i, j])


def _bbox_and_crop(full_mask):
    bbox = grids.mask_bbox(full_mask)
    return bbox, full_mask[bbox]


def init_partition(n):
    """V_0 = the whole domain: one cell, Euler characteristic 1."""
    full = np.ones((n, n), dtype=bool)
    bbox, mask = _bbox_and_crop(full)
    root = Cell(
        id=1, bbox=bbox, mask=mask, area_px=n * n, child_probes=(), punctures=()
    )
    return DataPartition(
        shape=(n, n),
        cells=(root,),
        labels=np.ones((n, n), dtype=np.int32),
        mapped_isolines=(),
        discovered=(),
    )


def insert_isoline(part, iso, protocol=False):
    """Split the containing cell along a mapped closed isoline.

    The split separates the parent's pixels inside the loop from those
    outside; child loops and punctures redistribute by parity against the
    new loop. Protocol mode additionally demands that both children carry
    topology (chi <= 0, i.e. the loop encircles a discovered extremum);
    violations raise there and are logged in free play.
    """
    n = part.shape[0]
    if iso.level is not None and iso.level <= 0.0:
        return replace(
            part,
            step=part.step + 1,
            mapped_isolines=part.mapped_isolines + (iso,),
            violations=part.violations + ("boundary-level isoline (no split)",),
        )
    cid = part.cell_of_point(*iso.origin)
    if cid == 0:
        raise ConsistencyError("isoline origin sits on a punctured pixel")

    pts = iso.dense if iso.dense is not None else iso.points
    loop_px = np.asarray(pts, dtype=float) * (n - 1)
    interior = grids.polyline_interior_mask(loop_px, part.shape)

    def sides(cell):
        rows, cols = cell.bbox
        full = np.zeros(part.shape, dtype=bool)
        full[rows, cols] = cell.mask
        return full & interior, full & ~interior

    violations = list(part.violations)
    parent = part.cell_by_id(cid)
    in_full, out_full = sides(parent)
    if not in_full.any() or not out_full.any():
        # the origin pixel rounded across a bounding curve: the loop splits
        # exactly one cell of the laminar family, find it
        parent = None
        for cell in part.cells:
            if cell.id == cid:
                continue
            a, b = sides(cell)
            if a.any() and b.any():
                parent, in_full, out_full = cell, a, b
                break
        if parent is None:
            # retrace of an existing curve, or a loop below pixel size
            violations.append(f"isoline in cell {cid} split nothing")
            return replace(
                part,
                step=part.step + 1,
                mapped_isolines=part.mapped_isolines + (iso,),
                violations=tuple(violations),
            )
        cid = parent.id

    probes_in = tuple(
        p for p in parent.child_probes if grids.point_in_polylines(p, [loop_px])
    )
    probes_out = tuple(p for p in parent.child_probes if p not in probes_in)
    punct_in = tuple(p for p in parent.punctures if interior[p])
    punct_out = tuple(p for p in parent.punctures if not interior[p])
    new_probe = tuple(loop_px[len(loop_px) // 2])

    in_bbox, in_mask = _bbox_and_crop(in_full)
    out_bbox, out_mask = _bbox_and_crop(out_full)
    child_in = Cell(
        id=part.next_id,
        bbox=in_bbox,
        mask=in_mask,
        area_px=int(in_mask.sum()),
        child_probes=probes_in,
        punctures=punct_in,
    )
    child_out = Cell(
        id=part.next_id + 1,
        bbox=out_bbox,
        mask=out_mask,
        area_px=int(out_mask.sum()),
        child_probes=probes_out + (new_probe,),
        punctures=punct_out,
    )
    if max(child_in.chi, child_out.chi) > 0:
        msg = f"split of cell {cid} produced a child with chi > 0"
        if protocol:
            raise ConsistencyError(msg)
        violations.append(msg)

    labels = part.labels.copy()
    labels[in_full] = child_in.id
    labels[out_full] = child_out.id
    cells = tuple(c for c in part.cells if c.id != cid) + (child_in, child_out)
    return DataPartition(
        shape=part.shape,
        cells=cells,
        labels=labels,
        mapped_isolines=part.mapped_isolines + (iso,),
        discovered=part.discovered,
        step=part.step + 1,
        next_id=part.next_id + 2,
        violations=tuple(violations),
    )


def insert_extremum(part, cp):
    """Puncture the cell containing a newly discovered extremum.

    Re-inserting a known extremum is a no-op. The cell count never
    changes; the containing cell's Euler characteristic drops by one.
    """
    if cp.index == 1:
        raise ConsistencyError("saddles are never discovered by gradient ends")
    for known in part.discovered:
        if (known.row, known.col) == (cp.row, cp.col):
            return part
    pix = (cp.row, cp.col)
    cid = int(part.labels[pix])
    if cid == 0:
        raise ConsistencyError("extremum pixel already punctured")
    parent = part.cell_by_id(cid)
    rows, cols = parent.bbox
    mask = parent.mask.copy()
    mask[pix[0] - rows.start, pix[1] - cols.start] = False
    cell = replace(
        parent,
        mask=mask,
        area_px=parent.area_px - 1,
        punctures=parent.punctures + (pix,),
    )
    labels = part.labels.copy()
    labels[pix] = 0
    cells = tuple(cell if c.id == cid else c for c in part.cells)
    return replace(
        part,
        cells=cells,
        labels=labels,
        discovered=part.discovered + (cp,),
    )


def eligible_cells(part):
    """Ids of cells with Euler characteristic <= -1 (the V' set)."""
    return sorted(c.id for c in part.cells if c.chi <= -1)


def cell_lower_bound(part, cid):
    """Minimum number of ground-truth cells meeting this cell: |-2 chi + 1|."""
    return abs(-2 * part.cell_by_id(cid).chi + 1)


def mask_chi(cell):
    """Pixel-mask Euler characteristic (components minus holes).

    Matches the structural chi whenever the geometry is resolved at grid
    scale; used by tests, not by the metrics.
    """
    return grids.euler_characteristic(cell.mask)


def snapshot_json(part):
    return {
        "step": part.step,
        "cells": [
            {
                "id": c.id,
                "area": c.area_px / part.labels.size,
                "chi": c.chi,
            }
            for c in sorted(part.cells, key=lambda c: c.id)
        ],
        "violations": list(part.violations),
    }
