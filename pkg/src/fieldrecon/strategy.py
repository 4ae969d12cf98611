"""Machine reconnaissance policies.

The topology-guided policy alternates exploitation (isoline mapping inside
cells with negative Euler characteristic, at the origin picked by the
largest-range gradient segment rule) and exploration (gradient mapping
from a point drawn uniformly by arc length on the mapped isolines); the
switch exploits whenever the consumption rate satisfies R_k > k^-T or
R_k <= 0. The n-scan policy is the open-loop benchmark: a gradient from a
uniform random point, then isolines at the n interior breakpoints of a
uniform division of the traced range. n-scan receives only a field probe,
so it structurally cannot read any topology-derived state.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field as dfield

import numpy as np

from . import entropy, partition as pt, trace

log = logging.getLogger(__name__)


class ReplayMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class StrategyConfig:
    kind: str  # "topo" | "nscan"
    t: float = 0.5
    n: int = 5
    budget: int = 100
    seed: int = 0

    def label(self):
        if self.kind == "topo":
            return f"topo:T={self.t:g}"
        return f"nscan:n={self.n}"


@dataclass
class RunTrace:
    header: dict
    programs: list = dfield(default_factory=list)
    reports: list = dfield(default_factory=list)
    partition: object = None
    isolines: list = dfield(default_factory=list)
    gradients: list = dfield(default_factory=list)


def should_exploit(r_k, k, t):
    """The switching rule: map an isoline when R_k > k^-T or R_k <= 0."""
    if r_k <= 0.0:
        return True
    threshold = float("inf") if k == 0 else float(k) ** (-t)
    return r_k > threshold


class FieldProbe:
    """Tracing capabilities only; what an open-loop policy may touch."""

    def __init__(self, field):
        self._field = field

    def trace_gradient(self, origin):
        return trace.trace_gradient(self._field, origin)

    def trace_isoline(self, origin):
        return trace.trace_isoline(self._field, origin)

    def value_at(self, x, y):
        return self._field.value_at(x, y)


def _arc_tables(polylines):
    tables = []
    total = 0.0
    for poly in polylines:
        seg = np.hypot(
            np.diff(poly.points[:, 0]), np.diff(poly.points[:, 1])
        )
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        tables.append(cum)
        total += cum[-1]
    return tables, total


def uniform_point_on_isolines(isolines, rng):
    """r_o ~ U(S(B_k)): arc-length-uniform over all mapped level contours."""
    tables, total = _arc_tables(isolines)
    u = rng.uniform(0.0, total)
    for poly, cum in zip(isolines, tables):
        if u <= cum[-1]:
            i = int(np.searchsorted(cum, u) - 1)
            i = min(max(i, 0), len(poly.points) - 2)
            span = cum[i + 1] - cum[i] or 1.0
            t = (u - cum[i]) / span
            p = poly.points[i] * (1 - t) + poly.points[i + 1] * t
            return (float(p[0]), float(p[1]))
        u -= cum[-1]
    p = isolines[-1].points[-1]
    return (float(p[0]), float(p[1]))


def _segments_in_cells(part, gradients, field, cell_ids):
    """Gradient-path segments l_ij = V_k^i intersect zeta_j with f-ranges.

    A run's first and last vertices sit at the cell border, where pixel
    rounding can leak across a bounding contour, so ranges of runs long
    enough to spare them are measured on the interior vertices only.
    """
    wanted = set(cell_ids)
    segments = []
    n = part.shape[0]
    for gid, poly in enumerate(gradients):
        pts = poly.dense if poly.dense is not None else poly.points
        pix = np.rint(pts[:, ::-1] * (n - 1)).astype(np.int64)
        np.clip(pix, 0, n - 1, out=pix)
        labels = part.labels[pix[:, 0], pix[:, 1]]
        values = field.values_at(pts)

        def close(start, stop):
            if stop - start < 2:
                return
            a, b = start, stop
            if stop - start >= 4:
                a, b = start + 1, stop - 1
            vals = values[a:b]
            segments.append(
                {
                    "gid": gid,
                    "cell": int(labels[start]),
                    "lo": float(vals.min()),
                    "hi": float(vals.max()),
                    "i0": start,
                    "i1": stop - 1,
                }
            )

        start = None
        for i in range(len(labels) + 1):
            label = labels[i] if i < len(labels) else 0
            inside = i < len(labels) and label in wanted
            if start is not None and (not inside or label != labels[start]):
                close(start, i)
                start = None
            if inside and start is None:
                start = i
        if start is not None:
            close(start, len(labels))
    return segments


def _origin_on_segment(part, poly, values, seg, fraction):
    """A point on the segment at lo + fraction * span, inside the cell."""
    pts = poly.dense if poly.dense is not None else poly.points
    span = seg["hi"] - seg["lo"]
    target = seg["lo"] + fraction * span
    for i in range(seg["i0"], seg["i1"]):
        v0, v1 = values[i], values[i + 1]
        if (v0 - target) * (v1 - target) > 0:
            continue
        exact = 0.0 if v1 == v0 else (target - v0) / (v1 - v0)
        for t in (exact, 0.25, 0.5, 0.75):
            p = pts[i] * (1 - t) + pts[i + 1] * t
            candidate = (float(p[0]), float(p[1]))
            value = v0 * (1 - t) + v1 * t
            inside_range = seg["lo"] + 0.05 * span < value < seg["hi"] - 0.05 * span
            if inside_range and part.cell_of_point(*candidate) == seg["cell"]:
                return candidate
    return None


def _shoelace_px(points_px):
    x = points_px[:, 0]
    y = points_px[:, 1]
    return 0.5 * abs(float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1])))


def _split_target(part, iso):
    """Id of the cell this isoline would split, or None for a no-op."""
    from . import grids

    n = part.shape[0]
    pts = iso.dense if iso.dense is not None else iso.points
    interior = grids.polyline_interior_mask(np.asarray(pts) * (n - 1), part.shape)
    order = [part.cell_of_point(*iso.origin)]
    order += [c.id for c in part.cells if c.id != order[0]]
    for cid in order:
        if cid == 0:
            continue
        cell = part.cell_by_id(cid)
        rows, cols = cell.bbox
        sub = interior[rows, cols] & cell.mask
        hit = int(sub.sum())
        if 0 < hit < cell.area_px:
            return cid
    return None


def choose_iso_origin(part, gradients, field, dead_levels=(), skip_cells=(), cps=None):
    """Largest-range-segment rule for the next isoline origin.

    Among gradient segments inside cells of V', pick the one with the
    largest value drop (ties: lower gradient id, then lower cell id) and
    return (origin, level, traced isoline) for the point at the segment's
    mid value. Candidates whose level is known dead, or whose traced loop
    encloses less than a few pixels (a ring around unresolved
    micro-structure), step down a deterministic fraction ladder before the
    next segment is considered. None when nothing is left.
    """
    eligible = [c for c in pt.eligible_cells(part) if c not in skip_cells]
    if not eligible:
        return None
    segments = _segments_in_cells(part, gradients, field, eligible)
    if not segments:
        return None
    segments.sort(key=lambda s: (-round(s["hi"] - s["lo"], 12), s["gid"], s["cell"]))
    value_cache = {}
    n = part.shape[0]
    traces_left = 8  # selection-time tracing budget per decision
    for seg in segments:
        gid = seg["gid"]
        span = seg["hi"] - seg["lo"]
        # the halving choice comes first; later rungs step around value
        # plateaus of unresolved micro-structure that trace dead loops
        for fraction in (0.5, 0.4, 0.6, 0.3, 0.7):
            level = seg["lo"] + fraction * span
            if any(abs(level - lvl) < 1e-6 for lvl in dead_levels):
                continue
            if gid not in value_cache:
                poly = gradients[gid]
                pts = poly.dense if poly.dense is not None else poly.points
                value_cache[gid] = field.values_at(pts)
            origin = _origin_on_segment(
                part, gradients[gid], value_cache[gid], seg, fraction
            )
            if origin is None:
                continue
            if traces_left <= 0:
                return None
            traces_left -= 1
            try:
                iso = trace.trace_isoline(field, origin, cps)
            except trace.TracingError:
                continue
            if any(abs(iso.level - lvl) < 1e-9 for lvl in dead_levels):
                continue
            if _shoelace_px(np.asarray(iso.dense) * (n - 1)) < 9.0:
                continue
            # the loop must split a V' cell, or the step is not exploitation
            if _split_target(part, iso) not in eligible:
                dead_levels = list(dead_levels) + [float(iso.level)]
                continue
            return origin, float(iso.level), iso
    return None


def _bounding_isoline_point(part, isolines, cell_id, rng):
    """A mapped-isoline vertex adjacent to the given cell, for exploration."""
    n = part.shape[0]
    for poly in isolines:
        pix = np.rint(poly.points[:, ::-1] * (n - 1)).astype(np.int64)
        np.clip(pix, 0, n - 1, out=pix)
        hits = []
        for dr, dc in ((0, 0), (0, 1), (0, -1), (1, 0), (-1, 0)):
            rr = np.clip(pix[:, 0] + dr, 0, n - 1)
            cc = np.clip(pix[:, 1] + dc, 0, n - 1)
            hits.append(part.labels[rr, cc] == cell_id)
        close = np.flatnonzero(np.any(hits, axis=0))
        if close.size:
            i = int(close[rng.integers(close.size)])
            return (float(poly.points[i][0]), float(poly.points[i][1]))
    return None


class Runner:
    """Shared bookkeeping for strategy execution on one field."""

    def __init__(self, field, cfg, gt=None):
        self.field = field
        self.cfg = cfg
        self.gt = gt
        self.cps = trace.critical_points_of(field)
        self.part = pt.init_partition(field.n)
        self.isolines = [trace.boundary_ring(field.n)]
        self.gradients = []
        self.rng = np.random.default_rng(cfg.seed)
        self.trace_out = RunTrace(
            header={
                "strategy": cfg.label(),
                "kind": cfg.kind,
                "t": cfg.t,
                "n": cfg.n,
                "budget": cfg.budget,
                "seed": cfg.seed,
                "field": {
                    "n": field.n,
                    "d": field.corr_length,
                    "seed": field.seed,
                },
            }
        )
        self.trace_out.reports.append(entropy.make_report(0, self.part, gt))

    @property
    def k(self):
        return len(self.trace_out.programs)

    def do_gradient(self, origin, mode):
        g = trace.trace_gradient(self.field, origin, self.cps)
        self.gradients.append(g)
        for end in g.endpoints:
            if end["kind"] == "extremum":
                self.part = pt.insert_extremum(self.part, self.cps[end["cp"]])
        self._record("gradient", origin, mode, g)

    def do_isoline(self, origin, mode, protocol, iso=None):
        if iso is None:
            iso = trace.trace_isoline(self.field, origin, self.cps)
        before = self.part.n_cells
        self.part = pt.insert_isoline(self.part, iso, protocol=protocol)
        split = self.part.n_cells > before
        self.isolines.append(iso)
        self._record("isoline", origin, mode, iso)
        return split

    def _record(self, kind, origin, mode, poly):
        digest = hashlib.sha1(self.part.labels.tobytes()).hexdigest()[:12]
        self.trace_out.programs.append(
            {
                "k": self.k + 1,
                "kind": kind,
                "x": origin[0],
                "y": origin[1],
                "mode": mode,
                "digest": digest,
            }
        )
        if kind == "isoline":
            self.trace_out.isolines.append(poly)
        else:
            self.trace_out.gradients.append(poly)
        self.trace_out.reports.append(
            entropy.make_report(
                self.k, self.part, self.gt, prev=self.trace_out.reports[-1]
            )
        )

    def finish(self):
        self.trace_out.partition = self.part
        return self.trace_out


def run_topology_guided(field, cfg, gt=None):
    """Algorithm: exploit on R_k > k^-T or R_k <= 0, else explore.

    R_0 is taken as 0, so the first decision exploits; with V'_0 empty the
    exploit falls through to exploration, making the first program a
    gradient from a random boundary point.
    """
    runner = Runner(field, cfg, gt)
    dead_levels = []
    while runner.k < cfg.budget:
        k = runner.k
        r_k = runner.trace_out.reports[-1].r_k
        exploit = should_exploit(r_k, k, cfg.t)
        executed = False
        if exploit:
            found = choose_iso_origin(
                runner.part,
                runner.gradients,
                field,
                dead_levels=dead_levels,
                cps=runner.cps,
            )
            if found is not None:
                target, level, iso = found
                if not runner.do_isoline(target, "exploit", protocol=True, iso=iso):
                    # retrace of an existing curve: never offer it again
                    dead_levels.append(level)
                executed = True
        if not executed:
            origin = None
            eligible = pt.eligible_cells(runner.part)
            if exploit and eligible:
                # a V' cell exists but no mapped gradient crosses it: push a
                # gradient through it from its bounding isoline
                origin = _bounding_isoline_point(
                    runner.part, runner.isolines, eligible[0], runner.rng
                )
            for attempt in range(6):
                if origin is None:
                    origin = uniform_point_on_isolines(runner.isolines, runner.rng)
                try:
                    runner.do_gradient(origin, "explore")
                    break
                except trace.TracingError as err:
                    log.info("explore gradient failed (%s); redrawing", err)
                    origin = None
            else:
                raise trace.TracingError("exploration cannot trace any gradient")
    return runner.finish()


def nscan_policy(probe, cfg, rng):
    """Open-loop scanning: yields (kind, origin) using only the probe."""
    while True:
        origin = (float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, 1.0)))
        try:
            grad = probe.trace_gradient(origin)
        except trace.TracingError as err:
            log.info("n-scan gradient failed (%s); redrawing", err)
            continue
        yield "gradient", origin, grad
        values = [probe.value_at(x, y) for x, y in grad.points]
        lo, hi = min(values), max(values)
        for j in range(1, cfg.n + 1):
            target = lo + (hi - lo) * j / (cfg.n + 1)
            pts = grad.points
            origin_iso = None
            for i in range(len(pts) - 1):
                v0, v1 = values[i], values[i + 1]
                if (v0 - target) * (v1 - target) <= 0:
                    t = 0.0 if v1 == v0 else (target - v0) / (v1 - v0)
                    p = pts[i] * (1 - t) + pts[i + 1] * t
                    origin_iso = (float(p[0]), float(p[1]))
                    break
            if origin_iso is not None:
                yield "isoline", origin_iso, None


def run_n_scan(field, cfg, gt=None):
    """Benchmark runner: executes the n-scan policy stream to budget."""
    runner = Runner(field, cfg, gt)
    probe = FieldProbe(field)
    policy = nscan_policy(probe, cfg, runner.rng)
    while runner.k < cfg.budget:
        kind, origin, pre_traced = next(policy)
        if kind == "gradient":
            g = pre_traced
            runner.gradients.append(g)
            for end in g.endpoints:
                if end["kind"] == "extremum":
                    runner.part = pt.insert_extremum(runner.part, runner.cps[end["cp"]])
            runner._record("gradient", origin, "scan", g)
        else:
            try:
                runner.do_isoline(origin, "scan", protocol=False)
            except trace.TracingError as err:
                log.info("n-scan isoline failed (%s); skipped", err)
    return runner.finish()


def run_strategy(field, cfg, gt=None):
    if cfg.kind == "topo":
        return run_topology_guided(field, cfg, gt)
    if cfg.kind == "nscan":
        return run_n_scan(field, cfg, gt)
    raise ValueError(f"unknown strategy kind {cfg.kind!r}")


def run_pure_exploitation(field, iso_steps, cfg=None, gt=None):
    """Convergence probe: all extrema revealed, then isoline-only mapping.

    Every extremum is inserted up front, gradients are mapped until each
    V' cell holds a segment (re-checked as cells split), then the
    largest-range rule drives ``iso_steps`` isoline programs. Returns the
    RunTrace; coverage gradients do not count toward the step total.
    """
    cfg = cfg or StrategyConfig(kind="topo", budget=iso_steps, seed=field.seed)
    runner = Runner(field, cfg, gt)
    for idx, cp in enumerate(runner.cps):
        if cp.is_extremum:
            runner.part = pt.insert_extremum(runner.part, cp)
    done = 0
    dead_levels = []
    coverage_tries = {}
    skip_cells = set()
    hbar_hist = [runner.trace_out.reports[-1].h_bar]
    total = float(field.n * field.n)

    def heaviest_cell():
        best = None
        for cell in runner.part.cells:
            if cell.chi > -1 or cell.id in skip_cells:
                continue
            mass = cell.area_px / total * np.log2(abs(-2 * cell.chi + 1))
            if best is None or mass > best[0]:
                best = (mass, cell.id)
        return None if best is None else best[1]

    def coverage(target_cell):
        tries = coverage_tries.get(target_cell, 0)
        if tries >= 8:
            # repeated transects cannot make this cell exploitable; its
            # H-bar mass is negligible by the time this happens
            skip_cells.add(target_cell)
            return
        coverage_tries[target_cell] = tries + 1
        cell = runner.part.cell_by_id(target_cell)
        rows, cols = cell.bbox
        flat = np.flatnonzero(cell.mask)
        pick = flat[runner.rng.integers(flat.size)]
        rr, cc = divmod(int(pick), cell.mask.shape[1])
        n = field.n
        origin = ((cols.start + cc) / (n - 1), (rows.start + rr) / (n - 1))
        try:
            runner.do_gradient(origin, "coverage")
        except trace.TracingError as err:
            log.info("coverage gradient failed (%s)", err)

    max_programs = 3 * iso_steps + 100
    last_injection = -10
    while done < iso_steps and runner.k < max_programs:
        if entropy.h_bar(runner.part) < 0.045:
            break  # bound spent; nothing left worth an isoline
        # stagnation means the heavy cells have no useful segments left:
        # push a fresh gradient transect through the heaviest one
        if (
            len(hbar_hist) >= 25
            and hbar_hist[-25] - hbar_hist[-1] < 0.01
            and hbar_hist[-1] > 0.05
            and done - last_injection >= 5
        ):
            target_cell = heaviest_cell()
            if target_cell is not None:
                coverage(target_cell)
                last_injection = done
        found = choose_iso_origin(
            runner.part,
            runner.gradients,
            field,
            dead_levels=dead_levels,
            skip_cells=skip_cells,
            cps=runner.cps,
        )
        if found is None:
            target_cell = heaviest_cell()
            if target_cell is None:
                break  # H-bar exhausted, or only unresolvable slivers remain
            coverage(target_cell)
            continue
        target, level, iso = found
        if not runner.do_isoline(target, "exploit", protocol=True, iso=iso):
            dead_levels.append(level)
        done += 1
        hbar_hist.append(runner.trace_out.reports[-1].h_bar)
    return runner.finish()


def trace_to_jsonl(run, path):
    with open(path, "w") as fh:
        fh.write(json.dumps({"header": run.header}) + "\n")
        for prog in run.programs:
            fh.write(json.dumps(prog) + "\n")


def trace_from_jsonl(path):
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    return lines[0]["header"], lines[1:]


def replay_trace(field, header, programs, gt=None):
    """Re-execute a recorded program list; bit-identical by construction."""
    cfg = StrategyConfig(
        kind=header["kind"],
        t=header.get("t", 0.5),
        n=header.get("n", 5),
        budget=len(programs),
        seed=header.get("seed", 0),
    )
    runner = Runner(field, cfg, gt)
    for prog in programs:
        origin = (prog["x"], prog["y"])
        if prog["kind"] == "gradient":
            runner.do_gradient(origin, prog.get("mode", "replay"))
        else:
            runner.do_isoline(
                origin, prog.get("mode", "replay"), protocol=prog.get("mode") == "exploit"
            )
        expected = prog.get("digest")
        actual = runner.trace_out.programs[-1]["digest"]
        if expected is not None and expected != actual:
            raise ReplayMismatch(
                f"program {prog.get('k')}: partition digest {actual} != recorded {expected}"
            )
    return runner.finish()
