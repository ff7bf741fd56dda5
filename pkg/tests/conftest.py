import numpy as np
import pytest

from platevem.mesh import ElementGeometry, Mesh


def random_convex_polygon(rng, min_points=5, max_points=12):
    """Convex hull of random points, counter-clockwise, with a random size and offset."""
    from scipy.spatial import ConvexHull

    while True:
        pts = rng.random((rng.integers(min_points, max_points + 1), 2))
        hull = ConvexHull(pts)
        xy = pts[hull.vertices]  # counter-clockwise for 2D hulls
        if len(xy) >= 3:
            scale = 10.0 ** rng.uniform(-2, 1)
            return (xy + rng.uniform(-5, 5, size=2)) * scale


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_square_geom():
    return ElementGeometry.from_vertices(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


@pytest.fixture
def unit_square_mesh():
    return Mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
