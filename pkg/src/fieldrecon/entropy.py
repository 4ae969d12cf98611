"""Information metrics over partitions and fields.

Measure conventions: a partition's own entropy H renormalizes by its
covered measure, while the conditional entropy H(M | V_k) and the
subjective bound are normalized by fixed per-field constants (the
ground-truth covered pixel count and the full grid size respectively).
Fixed normalization is what makes the monotonicity of H(M | V_k) under
refinement and the strict decrease of the bound under protocol splits
hold to machine precision instead of merely approximately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import grids


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class EntropyReport:
    k: int
    h_data: float  # H(V_k)
    h_bar: float  # subjective bound
    r_k: float  # consumption rate vs the previous step
    log2_cells: float
    h_cond: float = float("nan")  # H(M | V_k); oracle-side only


def partition_entropy(measures):
    """Shannon entropy in bits of a partition given its cell measures."""
    arr = np.asarray(list(measures), dtype=float)
    if arr.size == 0:
        raise ParameterError("empty partition")
    if np.any(arr < 0):
        raise ParameterError("negative cell measure")
    total = arr.sum()
    if total <= 0:
        raise ParameterError("partition has zero total measure")
    p = arr[arr > 0] / total
    return float(-(p * np.log2(p)).sum())


def _joint_counts(labels_a, labels_b):
    a = labels_a.ravel()
    b = labels_b.ravel()
    valid = (a > 0) & (b > 0)
    a = a[valid].astype(np.int64)
    b = b[valid].astype(np.int64)
    bmax = int(b.max()) + 1 if b.size else 1
    counts = np.bincount(a * bmax + b)
    idx = np.flatnonzero(counts)
    return idx // bmax, idx % bmax, counts[idx].astype(float)


def conditional_entropy(labels_a, labels_b):
    """H(a | b) in bits for two label arrays over the same domain.

    Pixels labeled 0 in either array are excluded; a covered-measure
    mismatch beyond 2% raises.
    """
    cov_a = int((labels_a > 0).sum())
    cov_b = int((labels_b > 0).sum())
    if min(cov_a, cov_b) == 0:
        raise ParameterError("partition covers nothing")
    if abs(cov_a - cov_b) > 0.02 * max(cov_a, cov_b):
        raise ParameterError("partitions cover measurably different domains")
    ai, bj, c = _joint_counts(labels_a, labels_b)
    total = c.sum()
    r = np.zeros(int(bj.max()) + 1)
    np.add.at(r, bj, c)
    return float(-np.sum(c / total * np.log2(c / r[bj])))


def conditional_entropy_m_given_v(gt, part):
    """H(M | V_k): topology partition conditioned on the data partition.

    Normalized by the ground-truth covered count, a per-field constant, so
    the value equals H(M) at V_0 = {X} exactly and never increases along a
    run (pixel removal and refinement both only lower it).
    """
    ai, bj, c = _joint_counts(gt.labels, part.labels)
    c0 = float(gt.covered)
    r = np.zeros(int(bj.max()) + 1)
    np.add.at(r, bj, c)
    return float(-np.sum(c / c0 * np.log2(c / r[bj])))


def h_bar(part):
    """Subjective bound on H(M | V_k) from areas and Euler characteristics."""
    total = float(part.labels.size)
    acc = 0.0
    for cell in part.cells:
        weight = abs(-2 * cell.chi + 1)
        if weight > 1:
            acc += cell.area_px / total * np.log2(weight)
    return float(acc)


def consumption_rate(prev, cur):
    """R_k: how much of the subjective bound the last program consumed."""
    return prev.h_bar - cur.h_bar


def make_report(k, part, gt=None, prev=None):
    hb = h_bar(part)
    return EntropyReport(
        k=k,
        h_data=partition_entropy([c.area_px for c in part.cells]),
        h_bar=hb,
        r_k=(prev.h_bar - hb) if prev is not None else 0.0,
        log2_cells=float(np.log2(part.n_cells)),
        h_cond=(
            conditional_entropy_m_given_v(gt, part) if gt is not None else float("nan")
        ),
    )


def function_entropy(f, m, samples=65536):
    """Entropy of a function w.r.t. a uniform partition of its range.

    For a 1-D callable on [0, 1] the domain components of each range-bin
    preimage are located by run decomposition of a fine sampling, with
    every component boundary refined by bisection, so measures are exact
    to root-finding precision. For a ScalarField the level-band
    decomposition of the field is used.
    """
    if hasattr(f, "grid"):
        from . import topology as topo

        if "tp" not in f._cache:
            f._cache["tp"] = topo.topology_partition(f)
        return field_range_entropy(f, f._cache["tp"], m)
    if m < 1:
        raise ParameterError("need at least one range bin")
    xs = np.linspace(0.0, 1.0, samples + 1)
    vals = np.asarray(f(xs), dtype=float)
    lo = vals.min()
    hi = vals.max()
    if hi == lo:
        return 0.0
    width = (hi - lo) / m
    bins = np.minimum(((vals - lo) / width).astype(np.int64), m - 1)
    change = np.flatnonzero(bins[1:] != bins[:-1])
    # refine each component boundary: the crossing of the bin edge between
    # the two samples (assumes at most one edge per sample gap)
    lo_x = xs[change]
    hi_x = xs[change + 1]
    edge_vals = lo + width * np.maximum(bins[change], bins[change + 1])
    rising = vals[change + 1] > vals[change]
    for _ in range(60):
        mid = 0.5 * (lo_x + hi_x)
        below = np.asarray(f(mid)) < edge_vals
        take_lo = below == rising
        lo_x = np.where(take_lo, mid, lo_x)
        hi_x = np.where(take_lo, hi_x, mid)
    cuts = 0.5 * (lo_x + hi_x)
    bounds = np.concatenate([[0.0], cuts, [1.0]])
    measures = np.diff(bounds)
    return partition_entropy(measures[measures > 0])


def field_range_entropy(field, gt, m):
    """H(f, V_m) for a gridded field via its level-band decomposition.

    Within a ground-truth cell every range bin meets the cell in a single
    annular band, so band measures are per-cell histograms; bands of cells
    meeting at a saddle merge in the bin holding the saddle level, and
    critical pixels join their host band.
    """
    g = field.grid
    labels = gt.labels
    n2 = g.size
    bins = np.minimum((g * m).astype(np.int64), m - 1)
    covered = labels > 0
    keys = labels[covered].astype(np.int64) * m + bins[covered]
    counts = np.bincount(keys, minlength=(gt.n_cells + 1) * m)

    parent = {}

    def find(k):
        root = k
        while parent.get(root, root) != root:
            root = parent[root]
        while parent.get(k, k) != root:
            parent[k], k = root, parent[k]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    extra = {}  # merged-group key -> critical pixel count
    for vid, cs in enumerate(gt.critical_sets):
        level_bin = min(int(cs.level * m), m - 1)
        cells = [gt.reeb.edges[e]["cell"] for e in gt.reeb.edges(vid)]
        keys = [cid * m + level_bin for cid in cells]
        for k in keys[1:]:
            union(keys[0], k)
        root = find(keys[0])
        extra[root] = extra.get(root, 0) + 1

    groups = {}
    for cid in range(1, gt.n_cells + 1):
        for b in range(m):
            k = cid * m + b
            c = counts[k]
            if c == 0 and k not in parent and k not in extra:
                continue
            root = find(k)
            groups[root] = groups.get(root, 0) + int(c)
    for root, c in extra.items():
        groups[find(root)] = groups.get(find(root), 0) + c

    measures = np.array([v for v in groups.values() if v > 0], dtype=float)
    p = measures / n2
    return float(-(p * np.log2(p)).sum())


def theorem3_gap(field, gt, m):
    """Both sides of the entropy-vs-topology bound at a finite bin count.

    Returns (lhs, rhs) with lhs = H(f, V_m) - log2 m and
    rhs = H(M) + sum_i mu(M_i)/mu(X) log2 delta_i, delta_i the per-cell
    range fraction measured on the 1-dilated cell (so boundary critical
    values count toward the cell's sup and inf).
    """
    lhs = field_range_entropy(field, gt, m) - np.log2(m)
    g = field.grid
    areas = np.asarray(gt.cell_areas, dtype=float)
    h_m = partition_entropy(areas)
    full_range = float(g.max() - g.min()) or 1.0
    log_deltas = np.zeros(gt.n_cells)
    for cid in range(1, gt.n_cells + 1):
        mask = gt.labels == cid
        rows, cols = grids.mask_bbox(mask, margin=2)
        sub = mask[rows, cols]
        dil = ndimage.binary_dilation(sub, structure=grids.EIGHT)
        vals = g[rows, cols][dil]
        delta = max((vals.max() - vals.min()) / full_range, 1e-15)
        log_deltas[cid - 1] = np.log2(delta)
    rhs = h_m + float((areas / areas.sum() * log_deltas).sum())
    return float(lhs), float(rhs)
