"""Gauge geometry: norms, support functions, chords, distances, neighborhoods."""

import numpy as np
import pytest

from anisofrac import (ConvexBody, JumpPolyline, aniso_neighborhood, chord_length,
                       gauge, gauge_distance, minkowski_content, support,
                       surface_density, unit_vector)
from anisofrac.geometry import gauge_gradient


BALL = ConvexBody.ball(1.0)
SQUARE = ConvexBody.square(1.0)
RHOMBUS = ConvexBody.polygon([(2, 0), (0, 1), (-2, 0), (0, -1)])
ELLIPSE31 = ConvexBody.ellipse(3.0, 1.0)


def random_symmetric_polygon(rng, k=5, rmin=0.5, rmax=2.0):
    """Convex hull of +/- random points: always symmetric and convex."""
    from scipy.spatial import ConvexHull
    pts = rng.uniform(rmin, rmax, k)[:, None] * np.stack(
        [np.cos(th := rng.uniform(0, np.pi, k)), np.sin(th)], axis=1)
    pts = np.concatenate([pts, -pts], axis=0)
    hull = ConvexHull(pts)
    return ConvexBody.polygon(pts[hull.vertices])


def gauge_bisection_oracle(body, x, iters=60):
    """Independent gauge evaluation: bisection on eta with a membership test."""
    x = np.asarray(x, dtype=float)

    def inside(p):
        # point-in-polygon via all half-plane tests; closed membership
        if body.shape == "ball":
            return np.linalg.norm(p) <= body.radius
        if body.shape == "ellipse":
            return np.linalg.norm(body._to_disk @ p) <= 1.0
        return np.all(body._normals @ p <= body._offsets)

    lo, hi = 0.0, 1.0
    while not inside(x / hi):
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if inside(x / mid):
            hi = mid
        else:
            lo = mid
    return hi


class TestGauge:
    def test_ball_euclidean(self):
        assert gauge(BALL, [3.0, 4.0]) == pytest.approx(5.0, abs=1e-14)

    def test_square_sup_norm(self):
        assert gauge(SQUARE, [0.5, -2.0]) == pytest.approx(2.0, abs=1e-14)

    def test_rhombus_against_bisection(self):
        assert gauge(RHOMBUS, [1.0, 0.5]) == pytest.approx(1.0, abs=1e-12)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.uniform(-3, 3, 2)
            if np.linalg.norm(x) < 1e-3:
                continue
            assert gauge(RHOMBUS, x) == pytest.approx(
                gauge_bisection_oracle(RHOMBUS, x), rel=1e-12)

    def test_ellipse_against_bisection(self):
        body = ConvexBody.ellipse(1.5, 0.7, angle=0.4)
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.uniform(-2, 2, 2)
            if np.linalg.norm(x) < 1e-3:
                continue
            assert gauge(body, x) == pytest.approx(
                gauge_bisection_oracle(body, x), rel=1e-12)

    def test_norm_axioms_sampled(self):
        rng = np.random.default_rng(3)
        bodies = [BALL, SQUARE, RHOMBUS, ELLIPSE31]
        bodies += [random_symmetric_polygon(rng) for _ in range(5)]
        for body in bodies:
            u = rng.uniform(-2, 2, (1000, 2))
            v = rng.uniform(-2, 2, (1000, 2))
            lam = rng.uniform(-3, 3, 1000)
            gu, gv = gauge(body, u), gauge(body, v)
            assert np.allclose(gauge(body, lam[:, None] * u), np.abs(lam) * gu,
                               rtol=1e-12, atol=1e-12)
            assert np.all(gauge(body, u + v) <= gu + gv + 1e-12)
            assert np.allclose(gauge(body, -u), gu, rtol=1e-13, atol=1e-13)
        assert gauge(BALL, [0.0, 0.0]) == 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for body in (BALL, ConvexBody.ellipse(1.5, 0.7, 0.3), RHOMBUS):
            for _ in range(10):
                x = rng.uniform(-2, 2, 2)
                if np.linalg.norm(x) < 0.3:
                    continue
                g = gauge_gradient(body, x)
                t = 1e-7
                fd = np.array([
                    (gauge(body, x + [t, 0]) - gauge(body, x - [t, 0])) / (2 * t),
                    (gauge(body, x + [0, t]) - gauge(body, x - [0, t])) / (2 * t)])
                assert np.allclose(g, fd, atol=1e-6)


class TestSupportAndDensity:
    def test_ball(self):
        assert support(BALL, [0.0, 1.0]) == pytest.approx(1.0)
        assert surface_density(BALL, unit_vector(0.7)) == pytest.approx(2.0)

    def test_square_vertex(self):
        assert support(SQUARE, [1.0, 1.0]) == pytest.approx(2.0)
        assert surface_density(SQUARE, [1.0, 0.0]) == pytest.approx(2.0)
        diag = np.array([1.0, 1.0]) / np.sqrt(2.0)
        assert surface_density(SQUARE, diag) == pytest.approx(2.0 * np.sqrt(2.0))

    def test_rhombus_against_boundary_sampling(self):
        # oracle: max inner product over densely sampled boundary points
        t = np.linspace(0, 1, 4001)[:, None]
        verts = RHOMBUS.vertices
        pts = np.concatenate([verts[i] * (1 - t) + verts[(i + 1) % 4] * t
                              for i in range(4)])
        rng = np.random.default_rng(5)
        for _ in range(10):
            v = rng.uniform(-2, 2, 2)
            oracle = np.max(np.abs(pts @ v))
            assert support(RHOMBUS, v) == pytest.approx(oracle, rel=1e-9)
        assert support(RHOMBUS, [1.0, 0.0]) == pytest.approx(2.0)

    def test_density_norm_axioms(self):
        rng = np.random.default_rng(6)
        for body in (BALL, SQUARE, random_symmetric_polygon(rng)):
            u = rng.uniform(-2, 2, (1000, 2))
            v = rng.uniform(-2, 2, (1000, 2))
            lam = rng.uniform(-3, 3, 1000)
            pu = surface_density(body, u)
            assert np.allclose(surface_density(body, lam[:, None] * u),
                               np.abs(lam) * pu, rtol=1e-12, atol=1e-12)
            assert np.all(surface_density(body, u + v)
                          <= pu + surface_density(body, v) + 1e-12)
            assert np.allclose(surface_density(body, -u), pu, rtol=1e-13)


class TestChordLength:
    def test_ball_diameter(self):
        for ang in (0.0, 0.3, 1.1):
            assert chord_length(BALL, unit_vector(ang)) == pytest.approx(2.0)

    def test_square_diagonal_by_ray_tracing(self):
        # oracle: bisection for the boundary crossing along +xi and -xi
        xi = np.array([1.0, 1.0]) / np.sqrt(2.0)

        def crossing(direction):
            lo, hi = 0.0, 4.0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if np.all(SQUARE._normals @ (mid * direction) <= SQUARE._offsets):
                    lo = mid
                else:
                    hi = mid
            return lo

        oracle = crossing(xi) + crossing(-xi)
        assert chord_length(SQUARE, xi) == pytest.approx(oracle, rel=1e-10)
        assert chord_length(SQUARE, xi) == pytest.approx(2.0 * np.sqrt(2.0))

    def test_chord_gauge_identity(self):
        rng = np.random.default_rng(7)
        for body in (BALL, SQUARE, RHOMBUS, ELLIPSE31,
                     random_symmetric_polygon(rng)):
            for ang in rng.uniform(0, 2 * np.pi, 50):
                xi = unit_vector(ang)
                assert chord_length(body, xi) * gauge(body, xi) == pytest.approx(
                    2.0, abs=1e-10)


class TestDuality:
    def test_density_equals_chord_supremum(self):
        # duality of the surface density with the chord-weighted projections
        angles = np.arange(4096) * 2 * np.pi / 4096
        xis = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        rng = np.random.default_rng(8)
        for body in (BALL, SQUARE, ELLIPSE31, RHOMBUS):
            taus = chord_length(body, xis)
            for ang in rng.uniform(0, 2 * np.pi, 16):
                v = unit_vector(ang) * rng.uniform(0.5, 2.0)
                phi = float(surface_density(body, v))
                approx = float(np.max(taus * np.abs(xis @ v)))
                assert abs(phi - approx) <= 0.01 * phi
                assert approx <= phi + 1e-12  # one-sided by construction


class TestGaugeDistance:
    def test_zero_on_targets(self):
        targets = np.array([[0.2, 0.3], [1.0, -0.5]])
        assert gauge_distance(BALL, targets[0], targets) == 0.0

    def test_ball_single_point(self):
        assert gauge_distance(BALL, [1.0, 1.0], np.zeros((1, 2))) == pytest.approx(
            np.sqrt(2.0))

    def test_square_to_sampled_segment(self):
        t = np.arange(0, 1 + 1e-9, 1e-3)[:, None]
        seg = np.concatenate([t, np.zeros_like(t)], axis=1)
        d = gauge_distance(SQUARE, [0.5, 0.3], seg)
        # oracle: direct loop over the sample with the sup-norm formula
        oracle = min(max(abs(0.5 - s), 0.3) for s in t[:, 0])
        assert d == pytest.approx(oracle, abs=1e-15)
        assert d == pytest.approx(0.3, abs=1e-3)

    def test_empty_targets(self):
        with pytest.raises(ValueError, match="empty target set"):
            gauge_distance(BALL, [0.0, 0.0], np.zeros((0, 2)))


def make_grid(bounds, spacing):
    from anisofrac import GridDomain
    return GridDomain.from_bounds(bounds, spacing=spacing)


class TestAnisoNeighborhood:
    def test_point_gives_disk(self):
        grid = make_grid([(-0.2, 0.2), (-0.2, 0.2)], 0.002)
        h = 0.1
        mask = aniso_neighborhood(BALL, np.array([[0.0, 0.0]]), h, grid)
        area = mask.sum() * grid.cell_measure
        assert area == pytest.approx(np.pi * h * h, rel=0.05)

    def test_segment_square_closed_form(self):
        # Minkowski sum of a segment of length L with h * square: 2Lh + 4h^2
        grid = make_grid([(-0.1, 1.1), (-0.1, 0.1)], 0.002)
        seg = JumpPolyline.segment((0.0, 0.0), (1.0, 0.0))
        h = 0.05
        mask = aniso_neighborhood(SQUARE, seg, h, grid)
        area = mask.sum() * grid.cell_measure
        assert area == pytest.approx(2 * h + 4 * h * h, rel=0.02)

    def test_vanishing_h(self):
        grid = make_grid([(-0.1, 1.1), (-0.1, 0.1)], 0.002)
        seg = JumpPolyline.segment((0.0, 0.0), (1.0, 0.0))
        areas = [aniso_neighborhood(BALL, seg, h, grid).sum() * grid.cell_measure
                 for h in (0.05, 0.02, 0.01)]
        assert areas[0] > areas[1] > areas[2]
        assert areas[2] < 0.05

    def test_too_coarse(self):
        grid = make_grid([(-0.1, 1.1), (-0.1, 0.1)], 0.01)
        seg = JumpPolyline.segment((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(ValueError, match="grid too coarse"):
            aniso_neighborhood(BALL, seg, 0.005, grid)


class TestMinkowskiContent:
    def test_segment_ball(self):
        grid = make_grid([(-0.1, 1.1), (-0.1, 0.1)], 0.001)
        seg = JumpPolyline.segment((0.0, 0.0), (1.0, 0.0))
        h = 0.02
        c = minkowski_content(BALL, seg, h, grid)
        assert c == pytest.approx(2.0 + np.pi * h, rel=0.02)

    def test_segment_square(self):
        grid = make_grid([(-0.1, 1.1), (-0.1, 0.1)], 0.001)
        seg = JumpPolyline.segment((0.0, 0.0), (1.0, 0.0))
        h = 0.02
        assert minkowski_content(SQUARE, seg, h, grid) == pytest.approx(
            2.0 + 4.0 * h, rel=0.02)

    def test_disjoint_additivity(self):
        grid = make_grid([(-0.1, 1.1), (-0.3, 0.3)], 0.002)
        a = JumpPolyline.segment((0.0, -0.2), (1.0, -0.2))
        b = JumpPolyline.segment((0.0, 0.2), (1.0, 0.2))
        both = JumpPolyline([((0.0, -0.2), (1.0, -0.2), (0, 1)),
                             ((0.0, 0.2), (1.0, 0.2), (0, 1))])
        h = 0.02
        ca = minkowski_content(BALL, a, h, grid)
        cb = minkowski_content(BALL, b, h, grid)
        assert minkowski_content(BALL, both, h, grid) == pytest.approx(ca + cb,
                                                                       rel=1e-12)


class TestBodiesAndJumps:
    def test_rejects_asymmetric_polygon(self):
        with pytest.raises(ValueError, match="negation"):
            ConvexBody.polygon([(1, 0), (0, 1), (-1, 0), (0, -2)])

    def test_rejects_nonconvex_polygon(self):
        with pytest.raises(ValueError):
            ConvexBody.polygon([(2, 0), (0.1, 0.1), (0, 2), (-2, 0),
                                (-0.1, -0.1), (0, -2)])

    def test_rejects_degenerate_ball(self):
        with pytest.raises(ValueError):
            ConvexBody.ball(0.0)

    def test_polyline_rejects_crossing(self):
        with pytest.raises(ValueError, match="non-crossing"):
            JumpPolyline([((0, 0), (1, 1), unit_vector(3 * np.pi / 4)),
                          ((0, 1), (1, 0), unit_vector(np.pi / 4))])

    def test_polyline_rejects_bad_normal(self):
        with pytest.raises(ValueError, match="orthogonal"):
            JumpPolyline([((0, 0), (1, 0), (1.0, 0.0))])

    def test_polyline_sampling_and_length(self):
        seg = JumpPolyline.segment((0.0, 0.0), (2.0, 0.0))
        assert seg.total_length == pytest.approx(2.0)
        pts = seg.sample(0.1)
        assert len(pts) == 21
        assert np.allclose(pts[:, 1], 0.0)
