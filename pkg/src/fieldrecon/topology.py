"""Ground-truth Morse structure of a windowed field.

Critical points are classified on the 8-neighborhood of interior grid
nodes: a node is a max/min when strictly above/below all eight neighbors,
and a saddle when the cyclic sign sequence of (neighbor - center) has at
least four sign changes. Exact ties mean the sampled field is not Morse
and the caller should regenerate with a fresh seed.

The partition induced by the critical level sets is built by severing the
pixel-graph edges crossed by each saddle contour (plus removing the
critical nodes themselves) and labeling what remains; every surviving
component is an annulus and becomes one edge of the Reeb graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import networkx as nx
import numpy as np
from skimage import measure

from . import grids
from .grids import euler_characteristic

MIN_SADDLE_LEVEL_GAP = 1e-9


class NonMorseFieldError(RuntimeError):
    """Sampled grid violates the Morse assumptions; regenerate the field."""


class DegenerateFieldError(RuntimeError):
    """Structure extraction produced an inconsistent partition."""


@dataclass(frozen=True)
class CriticalPoint:
    """A critical point of the bilinear interpolant.

    Extrema coincide with grid nodes (a bilinear patch attains its extremes
    at corners). Saddles are flagged at a node by the 8-ring criterion but
    live sub-pixel inside an adjacent patch; (x, y, value) carry the true
    location and critical value, (row, col) the flagged node.
    """

    row: int
    col: int
    x: float
    y: float
    value: float
    index: int  # 0 = minimum, 1 = saddle, 2 = maximum

    @property
    def is_extremum(self):
        return self.index != 1


@dataclass
class CriticalLevelSet:
    kind: str  # "extremum" | "saddle-contour"
    level: float
    owner: int  # index into the critical point list
    pixel: tuple  # extremum node, or anchor corner of the saddle's patch
    polylines: list = dfield(default_factory=list)  # xy lobe loops (saddles)
    point: tuple = None  # node location in pixel units (x, y)


@dataclass
class TopologyPartition:
    labels: np.ndarray  # 0 on critical pixels, 1..n_cells elsewhere
    cell_masks: list
    cell_chis: list
    cell_areas: list  # pixel counts
    critical_points: list
    critical_sets: list
    reeb: nx.Graph
    covered: int  # total pixels in cells

    @property
    def n_cells(self):
        return len(self.cell_masks)

    def area_fractions(self):
        return np.asarray(self.cell_areas, dtype=float) / self.labels.size


_RING = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)]


class _UnionFind:
    def __init__(self, size):
        self.parent = np.arange(size, dtype=np.int64)
        self.resolved = np.zeros(size, dtype=bool)

    def find(self, i):
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        self.parent[rb] = ra
        self.resolved[ra] |= self.resolved[rb]
        return ra


_OFFSETS4 = ((0, 1), (0, -1), (1, 0), (-1, 0))
_OFFSETS8 = _OFFSETS4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _merge_events(g, order, offsets, seeds, preunion=None):
    """Sweep pixels in ``order``, recording merges between resolved lineages.

    A component is *resolved* once it contains a seed pixel (an 8-ring
    extremum, or the boundary plateau via ``preunion``). Merges where at
    most one side is resolved absorb unresolved micro-structure silently,
    which is what keeps the partition consistent with the 8-neighborhood
    critical point counts. A merge of three or more resolved components is
    a monkey saddle and raises NonMorseFieldError.
    """
    n, m = g.shape
    uf = _UnionFind(n * m)
    processed = np.zeros(n * m, dtype=bool)
    if preunion is not None:
        flat = preunion
        first = flat[0]
        for idx in flat[1:]:
            uf.parent[idx] = first
        uf.resolved[first] = True
        processed[flat] = True
    for s in seeds:
        uf.resolved[s] = True
    events = []
    for idx in order:
        if processed[idx]:
            continue
        r, c = divmod(int(idx), m)
        roots = set()
        for dr, dc in offsets:
            rr, cc_ = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc_ < m:
                j = rr * m + cc_
                if processed[j]:
                    roots.add(uf.find(j))
        resolved_roots = [root for root in roots if uf.resolved[root]]
        if len(resolved_roots) >= 3:
            raise NonMorseFieldError(
                f"three level-set components meet at node ({r}, {c})"
            )
        if len(resolved_roots) == 2:
            events.append((r, c))
        acc = int(idx)
        for root in roots:
            acc = uf.union(acc, root)
        processed[idx] = True
    return events


def find_critical_points(field):
    """Critical points of a windowed field.

    Extrema are interior nodes strictly above/below all eight neighbors.
    Saddles are the level-set merge events between the components grown
    from those extrema: a join sweep (descending, 4-connected superlevel
    sets) pairs maxima, a split sweep (ascending, 8-connected sublevel
    sets, the boundary ring pre-joined as the global minimum plateau)
    pairs minima with the boundary. Raises NonMorseFieldError on plateau
    ties, monkey saddles, or saddles sharing a critical level.
    """
    g = field.grid
    n = field.n
    c = g[1:-1, 1:-1]
    diffs = np.empty((8,) + c.shape)
    for k, (dr, dc) in enumerate(_RING):
        diffs[k] = g[1 + dr : n - 1 + dr, 1 + dc : n - 1 + dc] - c
    if np.any(diffs == 0.0):
        raise NonMorseFieldError("plateau tie among neighboring nodes")
    pos = diffs > 0
    is_max = ~pos.any(axis=0)
    is_min = pos.all(axis=0)
    h = 1.0 / (n - 1)

    cps = []
    for index, where in ((0, is_min), (2, is_max)):
        rows, cols = np.nonzero(where)
        for r, cc_ in zip(rows + 1, cols + 1):
            cps.append(
                CriticalPoint(
                    row=int(r),
                    col=int(cc_),
                    x=float(cc_ * h),
                    y=float(r * h),
                    value=float(g[r, cc_]),
                    index=index,
                )
            )
    max_seeds = [cp.row * n + cp.col for cp in cps if cp.index == 2]
    min_seeds = [cp.row * n + cp.col for cp in cps if cp.index == 0]

    flat = g.ravel()
    desc = np.argsort(-flat, kind="stable")
    asc = np.argsort(flat, kind="stable")
    ring = np.zeros((n, n), dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    ring_idx = np.flatnonzero(ring.ravel())

    join_saddles = _merge_events(g, desc, _OFFSETS4, max_seeds)
    split_saddles = _merge_events(g, asc, _OFFSETS8, min_seeds, preunion=ring_idx)

    n_max = len(max_seeds)
    n_min = len(min_seeds)
    if len(join_saddles) != n_max - 1 or len(split_saddles) != n_min:
        raise DegenerateFieldError(
            "merge sweeps found %d + %d saddles for %d maxima and %d minima"
            % (len(join_saddles), len(split_saddles), n_max, n_min)
        )
    for r, cc_ in join_saddles + split_saddles:
        cps.append(
            CriticalPoint(
                row=int(r),
                col=int(cc_),
                x=float(cc_ * h),
                y=float(r * h),
                value=float(g[r, cc_]),
                index=1,
            )
        )
    cps.sort(key=lambda p: (p.value, p.row, p.col))
    saddle_levels = sorted(p.value for p in cps if p.index == 1)
    for a, b in zip(saddle_levels[:-1], saddle_levels[1:]):
        if b - a < MIN_SADDLE_LEVEL_GAP:
            raise NonMorseFieldError("two saddles share a critical level")
    return cps


def _split_figure_eight(components, row, col):
    """Return the two lobe loops of a saddle's level-set component(s).

    Marching squares returns the figure-eight either as two closed loops
    that both visit the saddle node, or as one closed walk visiting it
    twice; either way the node visits let us recover the two lobes.
    """
    loops = []
    for contour in components:
        at_node = np.flatnonzero(
            (np.abs(contour[:, 0] - row) < 1e-9) & (np.abs(contour[:, 1] - col) < 1e-9)
        )
        # closed polylines repeat the first vertex; drop the duplicate visit
        visits = [i for i in at_node if i != len(contour) - 1]
        if len(visits) == 1:
            loops.append(contour)
        elif len(visits) == 2:
            i, j = visits
            loops.append(contour[i : j + 1])
            loops.append(np.vstack([contour[j:], contour[1 : i + 1]]))
        else:
            return None
    return loops if len(loops) == 2 else None


def critical_level_sets(field, cps):
    """Critical level sets: extremum points and saddle figure-eights.

    A saddle's critical value is the value at its merge node, so its level
    set passes exactly through that node. The component(s) through the node
    are split into the two lobe loops of the figure-eight; loops are stored
    in unit coordinates.
    """
    g = field.grid
    n = field.n
    h = 1.0 / (n - 1)
    out = []
    for owner, cp in enumerate(cps):
        if cp.is_extremum:
            out.append(
                CriticalLevelSet(
                    kind="extremum",
                    level=cp.value,
                    owner=owner,
                    pixel=(cp.row, cp.col),
                    point=(float(cp.col), float(cp.row)),
                )
            )
            continue
        contours = measure.find_contours(g, cp.value)
        through_node = [
            ct
            for ct in contours
            if np.hypot(ct[:, 0] - cp.row, ct[:, 1] - cp.col).min() < 1e-9
        ]
        loops = _split_figure_eight(through_node, cp.row, cp.col)
        if loops is None:
            raise DegenerateFieldError(
                f"saddle node ({cp.row}, {cp.col}) does not resolve into two lobes"
            )
        polylines = [loop[:, ::-1] * h for loop in loops]  # to (x, y) units
        out.append(
            CriticalLevelSet(
                kind="saddle-contour",
                level=cp.value,
                owner=owner,
                pixel=(cp.row, cp.col),
                polylines=polylines,
                point=(float(cp.col), float(cp.row)),
            )
        )
    return out


def topology_partition(field, cps=None, csets=None):
    """Cells of the domain minus all critical level sets, plus Reeb graph.

    The lobe loops of all figure-eights form a laminar family, so each
    cell of the partition is exactly one parity signature: the chain of
    loops containing it. Assigning pixels by signature is immune to the
    pixel-width pinching that plagues connectivity-based labeling; the
    Reeb tree follows from signature algebra (a cell hangs below the
    saddle owning the innermost loop of its chain, and the vertex directly
    inside it is the critical set whose own chain equals the cell's).
    Raises DegenerateFieldError when the grid cannot resolve the structure.
    """
    if cps is None:
        cps = find_critical_points(field)
    if csets is None:
        csets = critical_level_sets(field, cps)
    n = field.n
    h = 1.0 / (n - 1)

    loops = []  # (owner vid, polyline in pixel units)
    for vid, cs in enumerate(csets):
        if cs.kind == "saddle-contour":
            for poly in cs.polylines:
                loops.append((vid, poly / h))
    n_loops = len(loops)

    crit_mask = np.zeros((n, n), dtype=bool)
    for cs in csets:
        crit_mask[cs.pixel] = True

    inside = np.zeros((n_loops, n * n), dtype=bool)
    for k, (_, poly) in enumerate(loops):
        inside[k] = grids.polyline_interior_mask(poly, (n, n)).ravel()

    # ancestors of each loop among all loops (strict containment); the test
    # vertex is taken mid-polyline so twin lobes never probe their shared node
    anc = []
    for k, (_, poly) in enumerate(loops):
        probe = tuple(poly[len(poly) // 2])
        anc.append(
            frozenset(
                j
                for j, (_, other) in enumerate(loops)
                if j != k and grids.point_in_polylines(probe, [other])
            )
        )

    flat_ok = ~crit_mask.ravel()
    if n_loops:
        bits = np.packbits(inside[:, flat_ok], axis=0)
        uniq, inv = np.unique(bits.T.copy(), axis=0, return_inverse=True)
        sig_of_cell = []
        for row in uniq:
            unpacked = np.unpackbits(row, count=n_loops)
            sig_of_cell.append(frozenset(np.flatnonzero(unpacked).tolist()))
    else:
        uniq = np.zeros((1, 0), dtype=np.uint8)
        inv = np.zeros(int(flat_ok.sum()), dtype=np.int64)
        sig_of_cell = [frozenset()]
    n_cells = len(sig_of_cell)

    labels = np.zeros(n * n, dtype=np.int32)
    labels[flat_ok] = inv.astype(np.int32) + 1
    labels = labels.reshape(n, n)

    cell_by_sig = {}
    for cid0, sig in enumerate(sig_of_cell):
        if sig in cell_by_sig:
            raise DegenerateFieldError("duplicate cell signature")
        cell_by_sig[sig] = cid0 + 1
        # every signature must be a chain in the laminar family
        if sig:
            innermost = [k for k in sig if sig - {k} <= anc[k]]
            if len(innermost) != 1 or anc[innermost[0]] != sig - {innermost[0]}:
                raise DegenerateFieldError("pixel signature is not a loop chain")

    cell_masks, cell_chis, cell_areas = [], [], []
    for cid in range(1, n_cells + 1):
        m = labels == cid
        rows, cols = grids.mask_bbox(m)
        cell_masks.append(m)
        cell_chis.append(euler_characteristic(m[rows, cols]))
        cell_areas.append(int(m.sum()))

    boundary_vid = len(csets)
    reeb = nx.Graph()
    for vid, cs in enumerate(csets):
        reeb.add_node(vid, kind=cs.kind, level=cs.level, owner=cs.owner)
    reeb.add_node(boundary_vid, kind="boundary", level=0.0, owner=None)

    # the vertex directly inside each cell: critical set whose chain equals
    # the cell's signature
    inner_vertex = {}

    def claim(sig, vid, what):
        cid = cell_by_sig.get(sig)
        if cid is None:
            raise DegenerateFieldError(f"{what} has an empty host region")
        if cid in inner_vertex:
            raise DegenerateFieldError(
                f"cell {cid} holds two inner critical sets "
                f"({inner_vertex[cid]}, {vid})"
            )
        inner_vertex[cid] = vid

    for vid, cs in enumerate(csets):
        if cs.kind == "saddle-contour":
            k1, k2 = (k for k, (owner, _) in enumerate(loops) if owner == vid)
            # side-by-side eight: lobes share ancestors; nested eight
            # (crater rim): the inner loop counts the outer as an ancestor
            if anc[k1] == anc[k2]:
                outside_chain = anc[k1]
            elif anc[k1] == anc[k2] | {k2}:
                outside_chain = anc[k2]
            elif anc[k2] == anc[k1] | {k1}:
                outside_chain = anc[k1]
            else:
                raise DegenerateFieldError(
                    "figure-eight lobes disagree on nesting"
                )
            claim(outside_chain, vid, f"saddle {cs.pixel}")
        else:
            r, c = cs.pixel
            sig = frozenset(np.flatnonzero(inside[:, r * n + c]).tolist())
            claim(sig, vid, f"extremum {cs.pixel}")

    for cid in range(1, n_cells + 1):
        if cid not in inner_vertex:
            raise DegenerateFieldError(f"cell {cid} has no inner critical set")
        sig = sig_of_cell[cid - 1]
        if not sig:
            outer = boundary_vid
        else:
            k = next(iter(kk for kk in sig if sig - {kk} <= anc[kk]))
            outer = loops[k][0]
        b = inner_vertex[cid]
        if outer == b or reeb.has_edge(outer, b):
            raise DegenerateFieldError("Reeb graph is not a tree")
        reeb.add_edge(outer, b, cell=cid, area=cell_areas[cid - 1] / labels.size)
    if reeb.number_of_edges() != reeb.number_of_nodes() - 1 or not nx.is_connected(
        reeb
    ):
        raise DegenerateFieldError("Reeb graph is not a tree")

    return TopologyPartition(
        labels=labels,
        cell_masks=cell_masks,
        cell_chis=cell_chis,
        cell_areas=cell_areas,
        critical_points=list(cps),
        critical_sets=csets,
        reeb=reeb,
        covered=int(labels.size - crit_mask.sum()),
    )


def reeb_to_json(tp):
    """Reeb graph export: vertices with kind/level, edges with cell areas."""
    vertices = [
        {
            "id": int(v),
            "kind": tp.reeb.nodes[v]["kind"],
            "level": float(tp.reeb.nodes[v]["level"]),
        }
        for v in sorted(tp.reeb.nodes)
    ]
    edges = [
        {
            "a": int(a),
            "b": int(b),
            "cell": int(data["cell"]),
            "area": float(data["area"]),
        }
        for a, b, data in sorted(tp.reeb.edges(data=True), key=lambda e: e[2]["cell"])
    ]
    return {"vertices": vertices, "edges": edges}


def structure_to_json(tp):
    """Ground-truth overlay for the post-game reveal."""
    pts = [
        {
            "x": cp.x,
            "y": cp.y,
            "value": cp.value,
            "index": cp.index,
        }
        for cp in tp.critical_points
    ]
    contours = []
    for cs in tp.critical_sets:
        if cs.kind == "saddle-contour":
            for poly in cs.polylines:
                contours.append(
                    {"level": cs.level, "points": np.round(poly, 5).tolist()}
                )
    return {
        "critical_points": pts,
        "saddle_contours": contours,
        "reeb": reeb_to_json(tp),
    }
