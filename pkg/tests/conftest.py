import numpy as np
import pytest

from fieldrecon import topology
from fieldrecon.field import ScalarField, apply_boundary_window, make_field


def bump_field(centers, sigmas, n=128):
    """Synthetic sum-of-gaussians field, windowed. Centers must avoid the
    grid's mirror symmetries or the tie detector fires."""
    xs = np.linspace(0.0, 1.0, n)
    x, y = np.meshgrid(xs, xs)
    g = np.zeros((n, n))
    for (cx, cy), s in zip(centers, sigmas):
        g += np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
    return apply_boundary_window(ScalarField(g, 0.3, 0, False))


def accepted_field(n, d, seed, min_extrema=1):
    """First non-degenerate field at or after the seed."""
    while True:
        f = make_field(n, d, seed)
        try:
            tp = topology.topology_partition(f)
            if sum(1 for c in tp.critical_points if c.is_extremum) >= min_extrema:
                return f
        except (topology.NonMorseFieldError, topology.DegenerateFieldError):
            pass
        seed += 1


@pytest.fixture(scope="session")
def single_bump():
    return bump_field([(0.5071, 0.4832)], [0.15])


@pytest.fixture(scope="session")
def two_bump():
    return bump_field([(0.3531, 0.5022), (0.6517, 0.4971)], [0.11, 0.105])


@pytest.fixture(scope="session")
def grf_field():
    return accepted_field(128, 0.25, 42)


@pytest.fixture(scope="session")
def smooth_field():
    return accepted_field(128, 0.5, 11)
