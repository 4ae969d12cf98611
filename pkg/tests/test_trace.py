import numpy as np
import pytest

from fieldrecon import trace
from fieldrecon.field import ScalarField
from fieldrecon.trace import (
    Polyline,
    boundary_ring,
    locate_click,
    resample_polyline,
    trace_gradient,
    trace_isoline,
)


def test_isoline_closed_near_circle(single_bump):
    iso = trace_isoline(single_bump, (0.62, 0.49))
    assert iso.closed
    center = np.array([0.5071, 0.4832])
    radii = np.hypot(iso.points[:, 0] - center[0], iso.points[:, 1] - center[1])
    assert radii.max() - radii.min() < 2.5 * 2 * single_bump.spacing


def test_isoline_level_tolerance(grf_field):
    rng = np.random.default_rng(1)
    traced = 0
    while traced < 40:
        p = tuple(rng.uniform(0.1, 0.9, 2))
        try:
            iso = trace_isoline(grf_field, p)
        except trace.TracingError:
            continue
        values = grf_field.values_at(iso.points)
        assert np.abs(values - iso.level).max() < 1e-3
        traced += 1


def test_isoline_from_boundary_is_the_ring(grf_field):
    iso = trace_isoline(grf_field, (0.0, 0.37))
    assert iso.level == 0.0
    assert iso.closed
    on_ring = (
        np.isclose(iso.points[:, 0], 0)
        | np.isclose(iso.points[:, 0], 1)
        | np.isclose(iso.points[:, 1], 0)
        | np.isclose(iso.points[:, 1], 1)
    )
    assert on_ring.all()


def test_isoline_near_extremum_rejected(single_bump):
    from fieldrecon.trace import critical_points_of

    cp = critical_points_of(single_bump)[0]
    with pytest.raises(trace.TracingError):
        trace_isoline(single_bump, (cp.x + 1e-4, cp.y))


def test_gradient_on_ramp_is_straight():
    n = 128
    ramp = np.tile(np.arange(n) / (n - 1), (n, 1))
    f = ScalarField(ramp, 0.5, 0, True)
    g = trace_gradient(f, (0.5, 0.503), cps=[])
    kinds = [e["kind"] for e in g.endpoints]
    assert kinds == ["boundary", "boundary"]
    assert np.ptp(g.points[:, 1]) < 1e-9
    assert g.points[0, 0] == pytest.approx(0.0, abs=0.02)
    assert g.points[-1, 0] == pytest.approx(1.0, abs=0.02)


def test_gradient_ascends_to_peak(single_bump):
    g = trace_gradient(single_bump, (0.35, 0.42))
    top = g.endpoints[1]
    assert top["kind"] == "extremum"
    peak = trace.critical_points_of(single_bump)[top["cp"]]
    assert peak.index == 2
    assert np.allclose(g.points[-1], (peak.x, peak.y), atol=1e-9)


def test_gradient_monotone_and_terminates(grf_field):
    rng = np.random.default_rng(2)
    cps = trace.critical_points_of(grf_field)
    for _ in range(25):
        p = tuple(rng.uniform(0.08, 0.92, 2))
        g = trace_gradient(grf_field, p)
        values = grf_field.values_at(g.points)
        assert np.all(np.diff(values) > -1e-9)
        for end in g.endpoints:
            assert end["kind"] in ("boundary", "extremum")
            if end["kind"] == "extremum":
                assert cps[end["cp"]].index in (0, 2)


def test_two_bump_gradients_reveal_both_maxima(two_bump):
    found = set()
    for origin in ((0.2502, 0.4501), (0.7488, 0.5487)):
        g = trace_gradient(two_bump, origin)
        for end in g.endpoints:
            if end["kind"] == "extremum":
                found.add(end["cp"])
    cps = trace.critical_points_of(two_bump)
    assert sum(1 for i in found if cps[i].index == 2) == 2


def test_retraced_isoline_close_in_hausdorff(grf_field):
    iso = trace_isoline(grf_field, (0.3, 0.62))
    again = trace_isoline(grf_field, tuple(iso.points[len(iso.points) // 2]))

    def hausdorff(a, b):
        d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
        return max(d.min(axis=1).max(), d.min(axis=0).max())

    assert hausdorff(iso.points, again.points) < 2 * grf_field.spacing


def test_resample_uniform_spacing():
    pts = np.array([[0, 0], [1, 0], [1, 1]], dtype=float)
    out = resample_polyline(pts, 0.1)
    seg = np.hypot(*np.diff(out, axis=0).T)
    assert np.allclose(seg, seg[0], atol=1e-9)
    assert np.allclose(out[0], pts[0]) and np.allclose(out[-1], pts[-1])


def test_locate_click_and_tie_break():
    a = Polyline(kind="gradient", points=np.array([[0.125, 0.0], [0.875, 0.0]]), origin=(0.125, 0.0))
    b = Polyline(kind="gradient", points=np.array([[0.125, 0.5], [0.875, 0.5]]), origin=(0.125, 0.5))
    iso = Polyline(kind="isoline", points=np.array([[0.125, 0.75], [0.875, 0.75]]), origin=(0.125, 0.75), level=0.5)
    polys = [a, b, iso]
    # exactly on a vertex
    idx, pt = locate_click(polys, (0.125, 0.0), tol=0.02)
    assert idx == 0 and np.allclose(pt, (0.125, 0.0))
    # too far from everything
    assert locate_click(polys, (0.5, 0.3), tol=0.02) is None
    # exactly equidistant between the two gradients: lower id wins
    idx, _ = locate_click(polys, (0.5, 0.25), tol=0.3)
    assert idx == 0
    # isolines are not click targets
    assert locate_click(polys, (0.5, 0.75), tol=0.01) is None


def test_boundary_ring_polyline():
    ring = boundary_ring(128)
    assert ring.kind == "isoline" and ring.level == 0.0 and ring.closed
    assert np.allclose(ring.points[0], ring.points[-1])


def test_polyline_json(grf_field):
    iso = trace_isoline(grf_field, (0.4, 0.4))
    blob = iso.to_json()
    assert blob["kind"] == "isoline" and "level" in blob
    g = trace_gradient(grf_field, (0.4, 0.4))
    blob = g.to_json()
    assert blob["kind"] == "gradient"
    assert {e["kind"] for e in blob["endpoints"]} <= {"boundary", "extremum"}
