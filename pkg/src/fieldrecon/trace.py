"""Numerical motion primitives: isoline and gradient-path tracing.

Both primitives operate on the bilinear interpolant of a windowed field.
Isolines come from marching squares at the origin's level; gradient paths
are integrated with fixed-step RK4 on the normalized gradient (step 0.25
grid cells), ascending and descending halves joined at the origin and
stored low-to-high. Stored polylines are resampled to one-grid-cell arc
spacing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from skimage import measure

from . import topology

log = logging.getLogger(__name__)


class TracingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceConfig:
    iso_tol: float = 1e-3
    grad_tol: float = 1e-4
    snap_radius_cells: float = 2.0
    step_cells: float = 0.25
    click_tol_cells: float = 1.5
    max_jitters: int = 40


DEFAULT_CONFIG = TraceConfig()


@dataclass
class Polyline:
    kind: str  # "isoline" | "gradient"
    points: np.ndarray  # (k, 2) xy, resampled to ~1 cell spacing
    origin: tuple
    level: float = None  # isolines only
    closed: bool = False
    endpoints: tuple = None  # gradient: (low end, high end) descriptors
    dense: np.ndarray = None  # native-resolution vertices, not serialized

    def to_json(self):
        out = {
            "kind": self.kind,
            "origin": [self.origin[0], self.origin[1]],
            "points": [[float(x), float(y)] for x, y in self.points],
        }
        if self.kind == "isoline":
            out["level"] = float(self.level)
            out["closed"] = bool(self.closed)
        else:
            out["endpoints"] = [dict(e) for e in self.endpoints]
        return out


def critical_points_of(field):
    """Cached critical structure of a field (engine-side knowledge)."""
    if "cps" not in field._cache:
        field._cache["cps"] = topology.find_critical_points(field)
    return field._cache["cps"]


def resample_polyline(points, spacing):
    """Uniform arc-length resampling; endpoints are kept exactly."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return pts.copy()
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return pts[:1].copy()
    m = max(int(round(total / spacing)), 1)
    targets = np.linspace(0.0, total, m + 1)
    return np.column_stack(
        [np.interp(targets, cum, pts[:, 0]), np.interp(targets, cum, pts[:, 1])]
    )


def boundary_ring(n):
    """The domain boundary as an isoline polyline (level 0)."""
    h = 1.0 / (n - 1)
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
    pts = resample_polyline(corners, h)
    return Polyline(
        kind="isoline",
        points=pts,
        origin=(0.0, 0.0),
        level=0.0,
        closed=True,
        dense=corners,
    )


def trace_isoline(field, origin, cps=None, cfg=DEFAULT_CONFIG):
    """Level-set contour through ``origin`` (the b^iso motion primitive).

    On these windowed fields every positive level is a closed loop; an
    origin on the boundary ring returns the ring itself. Origins at a
    saddle level (within 1e-9) are retraced at level + 1e-6.
    """
    x0, y0 = origin
    n = field.n
    h = field.spacing
    if cps is None:
        cps = critical_points_of(field)
    if min(x0, y0, 1.0 - x0, 1.0 - y0) < 0.5 * h:
        return boundary_ring(n)
    level = field.value_at(x0, y0)
    if level <= 0.0:
        return boundary_ring(n)
    snap = cfg.snap_radius_cells * h
    for cp in cps:
        if cp.is_extremum and np.hypot(cp.x - x0, cp.y - y0) < snap:
            raise TracingError("isoline origin within snap radius of an extremum")
    for cp in cps:
        if cp.index == 1 and abs(level - cp.value) < 1e-9:
            log.info("isoline level %.9f sits on a saddle level; perturbing", level)
            level += 1e-6
            break
    contours = measure.find_contours(field.grid, level)
    if not contours:
        raise TracingError(f"no contour at level {level}")
    best = None
    px, py = x0 / h, y0 / h
    for ct in contours:
        dist = np.hypot(ct[:, 0] - py, ct[:, 1] - px).min()
        if best is None or dist < best[0]:
            best = (dist, ct)
    dense = best[1][:, ::-1] * h  # to (x, y) units
    closed = bool(np.allclose(dense[0], dense[-1]))
    # tight loops can exceed the level tolerance at 1-cell chords; refine
    for spacing in (h, 0.5 * h, 0.25 * h):
        points = resample_polyline(dense, spacing)
        values = field.values_at(points)
        if np.max(np.abs(values - level)) < cfg.iso_tol:
            break
    else:
        raise TracingError("traced isoline exceeds the level tolerance")
    return Polyline(
        kind="isoline",
        points=points,
        origin=(x0, y0),
        level=float(level),
        closed=closed,
        dense=dense,
    )


def _grad_dir(field, x, y, sign):
    gx, gy = field.gradient_at(x, y)
    norm = np.hypot(gx, gy)
    if norm == 0.0:
        return None
    return sign * gx / norm, sign * gy / norm


def _resolve_stop(field, x, y, cps, snap):
    """Classify where a dying gradient ends: extremum, saddle, or boundary."""
    best = None
    for idx, cp in enumerate(cps):
        dist = np.hypot(cp.x - x, cp.y - y)
        if best is None or dist < best[0]:
            best = (dist, idx)
    if best is not None and best[0] < snap:
        return ("saddle" if cps[best[1]].index == 1 else "extremum"), best[1]
    if min(x, y, 1.0 - x, 1.0 - y) < snap:
        return "boundary", None
    return None, None


def _integrate_half(field, start, sign, cps, cfg):
    """One half of a gradient path; returns (points, end descriptor)."""
    h = field.spacing
    step = cfg.step_cells * h
    snap = cfg.snap_radius_cells * h
    x, y = start
    # entering from the ring: step inside so the gradient is meaningful
    x = min(max(x, h), 1.0 - h)
    y = min(max(y, h), 1.0 - h)
    pts = []
    jitters = 0
    pushes = 0
    fcur = field.value_at(x, y)
    # path budget in arc length, per the fixed-step-count contract
    arc_budget = 10 * field.n * np.sqrt(2.0) * step
    arc = 0.0
    # the interpolant's gradient stays O(1) however close the path orbits a
    # node, so progress (not gradient size) detects arrival: negligible
    # f-gain over a window, or an arc that barely displaces (a tight orbit),
    # means the path is circling something. Near a known critical point
    # that terminates or deflects the path; in open terrain it is an
    # unresolved micro-extremum of the interpolant and the path pushes
    # straight through.
    stall_window = 40
    stall_gain = cfg.grad_tol * step * stall_window * 0.05
    stall_disp = 2.5 * h
    stall_anchor = fcur
    anchor_xy = (x, y)
    stall_count = 0
    for _ in range(40000):
        if arc > arc_budget:
            raise TracingError("gradient path exceeded the step budget")
        stall_count += 1
        if stall_count >= stall_window:
            stalled = abs(fcur - stall_anchor) < stall_gain or (
                np.hypot(x - anchor_xy[0], y - anchor_xy[1]) < stall_disp
            )
            if stalled:
                kind, idx = _resolve_stop(field, x, y, cps, snap)
                if kind == "extremum":
                    cp = cps[idx]
                    pts.append((cp.x, cp.y))
                    return pts, {"kind": "extremum", "cp": idx}
                if kind == "boundary":
                    return pts, {"kind": "boundary", "cp": None}
                if kind == "saddle":
                    if jitters >= cfg.max_jitters:
                        raise TracingError("gradient path stuck at a saddle")
                    jitters += 1
                    prev = pts[-1] if pts else start
                    vx, vy = x - prev[0], y - prev[1]
                    vnorm = np.hypot(vx, vy) or 1.0
                    # widen the deflection while the saddle keeps catching us
                    amp = 0.5 * h * (1.0 + 0.5 * jitters)
                    x = min(max(x - vy / vnorm * amp, h), 1.0 - h)
                    y = min(max(y + vx / vnorm * amp, h), 1.0 - h)
                    fcur = field.value_at(x, y)
                else:
                    if pushes >= 200:
                        raise TracingError("gradient path stalled in open terrain")
                    pushes += 1
                    prev = pts[-1] if pts else start
                    vx, vy = x - prev[0], y - prev[1]
                    vnorm = np.hypot(vx, vy) or 1.0
                    x = min(max(x + vx / vnorm * h, h), 1.0 - h)
                    y = min(max(y + vy / vnorm * h, h), 1.0 - h)
                    fcur = field.value_at(x, y)
            stall_anchor = fcur
            anchor_xy = (x, y)
            stall_count = 0
        gx, gy = field.gradient_at(x, y)
        norm = np.hypot(gx, gy)
        d = None
        if norm >= cfg.grad_tol:
            d = (sign * gx / norm, sign * gy / norm)
        if d is None:
            kind, idx = _resolve_stop(field, x, y, cps, snap)
            if kind == "extremum":
                cp = cps[idx]
                pts.append((cp.x, cp.y))
                return pts, {"kind": "extremum", "cp": idx}
            if kind == "saddle":
                if jitters >= cfg.max_jitters:
                    raise TracingError("gradient path stuck at a saddle")
                jitters += 1
                prev = pts[-1] if pts else start
                vx, vy = x - prev[0], y - prev[1]
                norm = np.hypot(vx, vy)
                if norm == 0.0:
                    vx, vy = 1.0, 0.0
                else:
                    vx, vy = vx / norm, vy / norm
                x = min(max(x - vy * 0.5 * h, h), 1.0 - h)
                y = min(max(y + vx * 0.5 * h, h), 1.0 - h)
                log.info("gradient path jittered around a saddle")
                fcur = field.value_at(x, y)
                continue
            if kind == "boundary":
                return pts, {"kind": "boundary", "cp": None}
            raise TracingError("gradient vanished away from any critical point")
        # fixed-step RK4 on the normalized gradient
        trial = step
        for _ in range(4):
            k1 = d
            p2 = (x + 0.5 * trial * k1[0], y + 0.5 * trial * k1[1])
            k2 = _dir_clamped(field, p2, sign) or k1
            p3 = (x + 0.5 * trial * k2[0], y + 0.5 * trial * k2[1])
            k3 = _dir_clamped(field, p3, sign) or k2
            p4 = (x + trial * k3[0], y + trial * k3[1])
            k4 = _dir_clamped(field, p4, sign) or k3
            nx_ = x + trial / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            ny_ = y + trial / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            out_of_domain = not (0.0 <= nx_ <= 1.0 and 0.0 <= ny_ <= 1.0)
            if out_of_domain:
                nx_ = min(max(nx_, 0.0), 1.0)
                ny_ = min(max(ny_, 0.0), 1.0)
                pts.append((nx_, ny_))
                return pts, {"kind": "boundary", "cp": None}
            fnew = field.value_at(nx_, ny_)
            if (fnew - fcur) * sign > 0.0:
                break
            trial *= 0.5
        else:
            # persistent non-monotone step: the path is at an extremum or
            # a saddle that the gradient norm has not resolved yet
            kind, idx = _resolve_stop(field, x, y, cps, snap)
            if kind == "extremum":
                cp = cps[idx]
                pts.append((cp.x, cp.y))
                return pts, {"kind": "extremum", "cp": idx}
            if kind == "saddle":
                if jitters >= cfg.max_jitters:
                    raise TracingError("gradient path stuck at a saddle")
                jitters += 1
                prev = pts[-1] if pts else start
                vx, vy = x - prev[0], y - prev[1]
                vnorm = np.hypot(vx, vy) or 1.0
                x = min(max(x - vy / vnorm * 0.5 * h, h), 1.0 - h)
                y = min(max(y + vx / vnorm * 0.5 * h, h), 1.0 - h)
                fcur = field.value_at(x, y)
                continue
            if kind == "boundary":
                return pts, {"kind": "boundary", "cp": None}
            # unresolved micro-extremum of the interpolant: push through it
            if pushes >= 200:
                raise TracingError("gradient step cannot make progress")
            pushes += 1
            prev = pts[-1] if pts else start
            vx, vy = x - prev[0], y - prev[1]
            vnorm = np.hypot(vx, vy) or 1.0
            x = min(max(x + vx / vnorm * h, h), 1.0 - h)
            y = min(max(y + vy / vnorm * h, h), 1.0 - h)
            fcur = field.value_at(x, y)
        arc += trial
        x, y = nx_, ny_
        fcur = fnew
        pts.append((x, y))
    raise TracingError("gradient path exceeded the iteration budget")


def _dir_clamped(field, p, sign):
    x = min(max(p[0], 0.0), 1.0)
    y = min(max(p[1], 0.0), 1.0)
    return _grad_dir(field, x, y, sign)


def trace_gradient(field, origin, cps=None, cfg=DEFAULT_CONFIG):
    """Gradient path through ``origin`` (the b^grad motion primitive).

    The path is stored from its low end to its high end; the origin is an
    interior vertex. Endpoints are snapped to critical points within the
    snap radius; ends that die at the boundary taper are boundary ends.
    """
    if cps is None:
        cps = critical_points_of(field)
    h = field.spacing
    # separatrix hits are measure zero; a deterministic origin jitter
    # restores genericity when they occur
    last_err = None
    for jx, jy in ((0.0, 0.0), (0.7 * h, 0.3 * h), (-0.4 * h, 0.6 * h)):
        start = (origin[0] + jx, origin[1] + jy)
        try:
            up_pts, up_end = _integrate_half(field, start, +1, cps, cfg)
            down_pts, down_end = _integrate_half(field, start, -1, cps, cfg)
            break
        except TracingError as err:
            last_err = err
            log.info("gradient trace retried with jittered origin: %s", err)
    else:
        raise last_err
    chain = list(reversed(down_pts)) + [start] + up_pts
    dense = np.asarray(chain, dtype=float)
    points = resample_polyline(dense, field.spacing)
    # strict monotonicity of f along the stored polyline (low to high)
    values = field.values_at(points)
    keep = [0]
    for i in range(1, len(points)):
        if values[i] > values[keep[-1]]:
            keep.append(i)
    if len(keep) >= 2:
        points = points[keep]
    return Polyline(
        kind="gradient",
        points=points,
        origin=(origin[0], origin[1]),
        endpoints=(down_end, up_end),
        dense=dense,
    )


def locate_click(polylines, p, tol):
    """Resolve a click against mapped gradient paths.

    Returns (index, nearest point) for the closest gradient polyline whose
    distance is below ``tol``, or None for empty space. Ties go to the
    lower index.
    """
    px, py = p
    best = None
    for idx, poly in enumerate(polylines):
        if poly.kind != "gradient":
            continue
        pts = poly.points
        if len(pts) < 2:
            continue
        a = pts[:-1]
        b = pts[1:]
        ab = b - a
        denom = (ab**2).sum(axis=1)
        denom[denom == 0.0] = 1.0
        t = np.clip(((px - a[:, 0]) * ab[:, 0] + (py - a[:, 1]) * ab[:, 1]) / denom, 0, 1)
        proj = a + t[:, None] * ab
        dist = np.hypot(proj[:, 0] - px, proj[:, 1] - py)
        k = int(np.argmin(dist))
        if dist[k] <= tol and (best is None or dist[k] < best[0]):
            best = (float(dist[k]), idx, (float(proj[k, 0]), float(proj[k, 1])))
    if best is None:
        return None
    return best[1], best[2]
