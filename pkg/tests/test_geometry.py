import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecmap.geometry import (
    GeometryError,
    Polyline,
    Segment,
    arc_length,
    direction_cosine,
    edge_insertion_counts,
    insert_by_edge_length,
    midpoint_densify,
    point_chain_distance,
    point_segment_distance,
    rdp_simplify,
    resample_uniform,
    turning_cosine,
)

from conftest import random_chain

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
point = st.tuples(coord, coord)


class TestPolylineType:
    def test_rejects_repeated_vertex(self):
        with pytest.raises(GeometryError):
            Polyline([(0, 0), (0, 0), (1, 0)])

    def test_rejects_closed_ring_with_repeated_start(self):
        with pytest.raises(GeometryError):
            Polyline([(0, 0), (1, 0), (1, 1), (0, 0)], closed=True)

    def test_rejects_non_finite(self):
        with pytest.raises(GeometryError):
            Polyline([(0, 0), (np.nan, 1)])

    @pytest.mark.parametrize("verts,closed", [([(0, 0)], False), ([(0, 0), (1, 0)], True)])
    def test_too_few_vertices(self, verts, closed):
        with pytest.raises(GeometryError):
            Polyline(verts, closed)

    def test_drops_z(self):
        p = Polyline([(0, 0, 5), (1, 0, 7)])
        assert p.vertices.shape == (2, 2)

    def test_degenerate_segment(self):
        with pytest.raises(GeometryError):
            Segment((1, 1), (1, 1))


class TestArcLength:
    def test_open_345(self):
        assert arc_length(Polyline([(0, 0), (3, 0), (3, 4)])) == 7.0

    def test_closed_square(self, unit_square):
        assert arc_length(unit_square) == 4.0

    def test_tiny(self):
        assert arc_length(Polyline([(0, 0), (0, 0.001)])) == pytest.approx(0.001, rel=1e-12)


class TestRdp:
    def test_collinear_within_tolerance(self):
        out = rdp_simplify(Polyline([(0, 0), (1, 0.001), (2, 0)]), 0.05)
        np.testing.assert_array_equal(out.vertices, [[0, 0], [2, 0]])

    def test_large_deviation_kept(self):
        p = Polyline([(0, 0), (1, 1), (2, 0)])
        assert rdp_simplify(p, 0.05) == p

    def test_two_vertices_unchanged(self):
        p = Polyline([(0, 0), (5, 1)])
        assert rdp_simplify(p, 0.05) == p

    def test_noisy_line_bound(self, gen):
        x = np.linspace(0, 30, 100)
        v = np.column_stack([x, gen.normal(0, 0.03, 100)])
        p = Polyline(v)
        out = rdp_simplify(p, 0.05)
        assert len(out) < len(p)
        np.testing.assert_array_equal(out.vertices[[0, -1]], v[[0, -1]])
        # subset of the input, in order
        idx = [int(np.flatnonzero((v == q).all(1))[0]) for q in out.vertices]
        assert idx == sorted(idx)
        assert point_chain_distance(v, out).max() <= 0.05

    def test_closed_ring(self, gen):
        t = np.linspace(0, 2 * np.pi, 80, endpoint=False)
        v = np.column_stack([5 * np.cos(t), 5 * np.sin(t)]) + gen.normal(0, 0.01, (80, 2))
        out = rdp_simplify(Polyline(v, True), 0.05)
        assert out.closed and 3 <= len(out) < 80
        assert point_chain_distance(v, out).max() <= 0.05

    def test_nonpositive_epsilon(self):
        with pytest.raises(GeometryError):
            rdp_simplify(Polyline([(0, 0), (1, 0)]), 0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.integers(3, 60), st.floats(0.01, 1.0))
    def test_idempotent_and_bounded(self, seed, n, eps):
        v = random_chain(np.random.default_rng(seed), n)
        p = Polyline(v)
        out = rdp_simplify(p, eps)
        assert rdp_simplify(out, eps) == out
        assert point_chain_distance(v, out).max() <= eps + 1e-12


class TestResample:
    def test_open_line(self):
        out = resample_uniform(Polyline([(0, 0), (4, 0)]), 5)
        np.testing.assert_allclose(out.vertices, [[0, 0], [1, 0], [2, 0], [3, 0], [4, 0]], atol=1e-15)

    def test_endpoints_only(self):
        out = resample_uniform(Polyline([(0, 0), (3, 0), (3, 4)]), 2)
        np.testing.assert_array_equal(out.vertices, [[0, 0], [3, 4]])

    def test_closed_square_positions(self, unit_square):
        out = resample_uniform(unit_square, 4)
        # perimeter position of each sample under the square's arclength parameterization
        def position(q):
            x, y = q
            if abs(y) < 1e-12:
                return x
            if abs(x - 1) < 1e-12:
                return 1 + y
            if abs(y - 1) < 1e-12:
                return 3 - x
            return 4 - y

        assert [position(q) for q in out.vertices] == pytest.approx([0, 1, 2, 3], abs=1e-12)

    def test_equal_spacing(self, gen):
        p = Polyline(random_chain(gen, 12))
        out = resample_uniform(p, 40)
        # samples sit on p, so their spacing along p is total / 39
        seg = np.hypot(*np.diff(out.vertices, axis=0).T)
        assert seg.sum() <= arc_length(p) + 1e-9
        np.testing.assert_array_equal(out.vertices[[0, -1]], p.vertices[[0, -1]])

    @pytest.mark.parametrize("n,closed", [(1, False), (2, True)])
    def test_too_few(self, n, closed):
        p = Polyline([(0, 0), (1, 0), (1, 1)], closed)
        with pytest.raises(GeometryError):
            resample_uniform(p, n)

    def test_preserves_length_when_refining_own_samples(self):
        base = resample_uniform(Polyline([(0, 0), (2, 0), (2, 2)]), 5)
        # every second sample of a 9-point resampling is a base sample, so the chain is unchanged
        fine = resample_uniform(base, 9)
        assert arc_length(fine) == pytest.approx(arc_length(base), rel=1e-6)


class TestInsertByEdgeLength:
    def test_single_midpoint(self):
        out = insert_by_edge_length(Polyline([(0, 0), (2, 0)]), 3)
        np.testing.assert_allclose(out.vertices, [[0, 0], [1, 0], [2, 0]])

    def test_longest_gap_first(self):
        out = insert_by_edge_length(Polyline([(0, 0), (1, 0), (4, 0)]), 4)
        np.testing.assert_allclose(out.vertices, [[0, 0], [1, 0], [2.5, 0], [4, 0]])

    def test_even_split(self):
        out = insert_by_edge_length(Polyline([(0, 0), (1, 0)]), 5)
        np.testing.assert_allclose(out.vertices, [[0, 0], [0.25, 0], [0.5, 0], [0.75, 0], [1, 0]])

    def test_counts_oracle(self):
        # greedy oracle: repeatedly split the edge with the longest current gap
        lengths = [1.0, 3.0, 0.5, 2.2]
        counts = [0] * 4
        for _ in range(9):
            gaps = [l / (c + 1) for l, c in zip(lengths, counts)]
            counts[int(np.argmax(gaps))] += 1
        assert edge_insertion_counts(lengths, 9) == counts

    def test_originals_preserved(self, gen):
        v = random_chain(gen, 6)
        out = insert_by_edge_length(Polyline(v), 17)
        assert len(out) == 17
        kept = [i for i, q in enumerate(out.vertices) if (v == q).all(1).any()]
        assert len(kept) == 6

    def test_closed_uses_wrap_edge(self, unit_square):
        out = insert_by_edge_length(unit_square, 8)
        assert len(out) == 8 and out.closed
        np.testing.assert_allclose(out.vertices[-1], [0, 0.5])


class TestMidpointDensify:
    def test_two_points(self):
        np.testing.assert_array_equal(midpoint_densify(Polyline([(0, 0), (2, 0)])).vertices, [[0, 0], [1, 0], [2, 0]])

    def test_three_points(self):
        out = midpoint_densify(Polyline([(0, 0), (2, 0), (2, 2)]))
        np.testing.assert_array_equal(out.vertices, [[0, 0], [1, 0], [2, 0], [2, 1], [2, 2]])

    def test_closed_adds_wrap_midpoint(self, unit_square):
        out = midpoint_densify(unit_square)
        assert len(out) == 8
        np.testing.assert_array_equal(out.vertices[-1], [0, 0.5])

    def test_schedule_chain(self, gen):
        p = Polyline(random_chain(gen, 3))
        counts = []
        for _ in range(3):
            q = midpoint_densify(p)
            assert np.array_equal(q.vertices[::2], p.vertices)  # bit-exact
            p = q
            counts.append(len(p))
        assert counts == [5, 9, 17]


class TestKernels:
    def test_point_segment_interior(self):
        assert point_segment_distance((1, 1), Segment((0, 0), (2, 0))) == 1.0

    def test_point_segment_clamped(self):
        assert point_segment_distance((3, 0), Segment((0, 0), (2, 0))) == 1.0

    def test_point_segment_diagonal(self):
        # independent oracle: project onto the unit direction by hand
        a, b, v = np.array([0.0, 0.0]), np.array([1.0, 1.0]), np.array([0.3, 0.7])
        u = (b - a) / math.sqrt(2)
        foot = a + np.dot(v - a, u) * u
        expected = math.dist(v, foot)
        got = point_segment_distance(v, Segment(a, b))
        assert got == pytest.approx(expected, abs=1e-15)
        assert got == pytest.approx(0.2828427, abs=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(point, point, st.floats(0, 1))
    def test_zero_on_segment(self, a, b, t):
        if math.dist(a, b) < 1e-3:
            return
        on = np.array(a) + t * (np.array(b) - np.array(a))
        assert point_segment_distance(on, Segment(a, b)) == pytest.approx(0.0, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(point, point, point)
    def test_nonnegative(self, v, a, b):
        if math.dist(a, b) < 1e-6:
            return
        assert point_segment_distance(v, Segment(a, b)) >= 0

    @pytest.mark.parametrize(
        "b,expected", [((2, 0), 1.0), ((0, 2), 0.0), ((-2, 0), -1.0)], ids=["parallel", "perpendicular", "opposite"]
    )
    def test_direction_cosine(self, b, expected):
        assert direction_cosine(Segment((0, 0), (1, 0)), Segment((0, 0), b)) == pytest.approx(expected, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(point, point, point, point)
    def test_direction_cosine_properties(self, a, b, c, d):
        if math.dist(a, b) < 1e-6 or math.dist(c, d) < 1e-6:
            return
        e1, e2 = Segment(a, b), Segment(c, d)
        assert direction_cosine(e1, e1) == pytest.approx(1.0, abs=1e-12)
        assert direction_cosine(e1, Segment(d, c)) == pytest.approx(-direction_cosine(e1, e2), abs=1e-12)

    @pytest.mark.parametrize(
        "c,expected", [((2, 0), 1.0), ((1, 1), 0.0), ((0, 0), -1.0)], ids=["straight", "right-angle", "u-turn"]
    )
    def test_turning_cosine(self, c, expected):
        assert turning_cosine(Segment((0, 0), (1, 0)), Segment((1, 0), c)) == pytest.approx(expected, abs=1e-15)

    def test_turning_cosine_needs_shared_vertex(self):
        with pytest.raises(GeometryError):
            turning_cosine(Segment((0, 0), (1, 0)), Segment((2, 0), (3, 0)))

