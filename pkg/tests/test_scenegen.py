import numpy as np
import pytest

from vecmap.geometry import Polyline, arc_length
from vecmap.hsmr import ElementCategory, MapElement
from vecmap.scenegen import PerceptionRange, SceneSpec, clip_to_range, generate_scene, load_suite


def segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    return orient(p1, p2, q1) * orient(p1, p2, q2) < 0 and orient(q1, q2, p1) * orient(q1, q2, p2) < 0


def chains_intersect(a, b):
    return any(segments_intersect(a[i], a[i + 1], b[j], b[j + 1]) for i in range(len(a) - 1) for j in range(len(b) - 1))


class TestPerceptionRange:
    def test_named(self):
        assert PerceptionRange.named("regular") == PerceptionRange((-15, 15), (-30, 30))
        assert PerceptionRange.named("long") == PerceptionRange((-15, 15), (-60, 60))

    def test_invalid(self):
        with pytest.raises(ValueError):
            PerceptionRange((1, 1), (0, 1))


class TestSceneSpec:
    def test_curvature_bound(self):
        with pytest.raises(ValueError):
            SceneSpec(curvature_range=(0.0, 0.06))

    def test_negative_counts(self):
        with pytest.raises(ValueError):
            SceneSpec(crossing_count=-1)


class TestGenerate:
    def test_deterministic(self):
        spec = SceneSpec(seed=7)
        assert generate_scene(spec) == generate_scene(spec)

    def test_seeds_differ(self):
        assert generate_scene(SceneSpec(seed=1)) != generate_scene(SceneSpec(seed=2))

    def test_straight_two_lanes(self):
        scene = generate_scene(SceneSpec(seed=3, lanes_per_road=2, curvature_range=(0, 0), crossing_count=0))
        cats = sorted(e.category.value for e in scene)
        assert cats == ["boundary", "boundary", "divider"]

    def test_empty(self):
        assert len(generate_scene(SceneSpec(road_count=0, crossing_count=0))) == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_arc_vertex_counts_long_range(self, seed):
        scene = generate_scene(SceneSpec(seed=seed, curvature_range=(0.02, 0.02)), PerceptionRange.long())
        counts = [len(e.shape) for e in scene if e.category is ElementCategory.BOUNDARY]
        assert counts and all(8 <= c <= 64 for c in counts)

    @pytest.mark.parametrize("range_name", ["regular", "long"])
    def test_inside_range(self, range_name):
        rng = PerceptionRange.named(range_name)
        for seed in range(10):
            spec = SceneSpec(seed=seed, road_count=2, lanes_per_road=3, crossing_count=2)
            for e in generate_scene(spec, rng):
                assert rng.contains(e.shape.vertices, tol=1e-9).all()

    def test_dividers_do_not_cross_boundaries(self):
        for seed in range(10):
            scene = generate_scene(SceneSpec(seed=seed, lanes_per_road=4))
            bounds = [e.shape.vertices for e in scene if e.category is ElementCategory.BOUNDARY]
            divs = [e.shape.vertices for e in scene if e.category is ElementCategory.DIVIDER]
            assert not any(chains_intersect(d, b) for d in divs for b in bounds)

    def test_crossing_is_closed(self):
        scene = generate_scene(SceneSpec(seed=5))
        crossings = [e for e in scene if e.category is ElementCategory.PED_CROSSING]
        assert len(crossings) == 1 and crossings[0].closed


class TestClip:
    rng = PerceptionRange.regular()

    def test_inside_unchanged(self):
        e = MapElement(ElementCategory.DIVIDER, Polyline([(0, 0), (1, 5), (2, 9)]))
        assert clip_to_range([e], self.rng).elements == (e,)

    def test_crossing_both_x_borders(self):
        e = MapElement(ElementCategory.DIVIDER, Polyline([(-40, 3), (40, 3)]))
        (out,) = clip_to_range([e], self.rng)
        np.testing.assert_array_equal(out.shape.vertices, [[-15, 3], [15, 3]])

    def test_u_shape_splits(self):
        # leaves through y = 30 and comes back in
        u = [(-5, 0), (-5, 40), (5, 40), (5, 0)]
        e = MapElement(ElementCategory.BOUNDARY, Polyline(u))
        out = clip_to_range([e], self.rng)
        assert len(out) == 2
        # oracle: each vertical leg meets y = 30 at its own x
        ends = sorted(tuple(p) for f in out for p in f.shape.vertices if p[1] == 30)
        assert ends == [(-5.0, 30.0), (5.0, 30.0)]

    def test_fully_outside(self):
        e = MapElement(ElementCategory.DIVIDER, Polyline([(20, 0), (30, 0)]))
        assert len(clip_to_range([e], self.rng)) == 0

    def test_short_fragment_dropped(self):
        e = MapElement(ElementCategory.DIVIDER, Polyline([(14.5, 0), (20, 0)]))
        assert len(clip_to_range([e], self.rng)) == 0

    def test_polygon_clipped_to_border(self):
        sq = [(10, 0), (20, 0), (20, 5), (10, 5)]
        e = MapElement(ElementCategory.PED_CROSSING, Polyline(sq, True))
        (out,) = clip_to_range([e], self.rng)
        assert out.closed and out.shape.vertices[:, 0].max() == 15
        assert arc_length(out.shape) == pytest.approx(20.0)


def test_standard_suite():
    suite = load_suite()
    assert len(suite.seeds) == 20
    scenes = suite.scenes()
    assert all(len(s) == 5 for s in scenes)
    long_suite = load_suite(range_name="long")
    assert long_suite.range == PerceptionRange.long()
