import math

import numpy as np
import pytest

from mapprior.errors import DataError
from mapprior.vector_core import (ElementType, PerceptionWindow, VectorMap,
                                  VectorPoint, compute_directions,
                                  make_instance)


class TestElementType:
    def test_codes_are_stable(self):
        assert ElementType.LANE_DIVIDER == 0
        assert ElementType.PEDESTRIAN_CROSSING == 1
        assert ElementType.ROAD_BOUNDARY == 2
        assert ElementType.CENTERLINE == 3

    def test_from_name_rejects_unknown(self):
        with pytest.raises(DataError, match="sidewalk"):
            ElementType.from_name("sidewalk")


class TestVectorPoint:
    def test_direction_must_be_unit_or_zero(self):
        VectorPoint(0.0, 0.0, 0.0, 1.0)
        VectorPoint(0.0, 0.0, 0.0, 0.0)
        with pytest.raises(DataError):
            VectorPoint(0.0, 0.0, 0.5, 0.5)

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            VectorPoint(float("nan"), 0.0)


class TestMakeInstance:
    def test_minimal_polyline(self):
        inst = make_instance([(0, 0), (0, 10)], "lane_divider")
        assert len(inst) == 2
        assert all(p.cls == int(ElementType.LANE_DIVIDER) for p in inst.points)

    def test_too_few_points(self):
        with pytest.raises(DataError, match="too few"):
            make_instance([(0, 0)], ElementType.LANE_DIVIDER)

    def test_boundary_loop_echo(self):
        loop = [(math.cos(a), math.sin(a)) for a in np.linspace(0, 2 * math.pi, 20)]
        inst = make_instance(loop, ElementType.ROAD_BOUNDARY)
        assert len(inst) == 20
        assert inst.element_type == ElementType.ROAD_BOUNDARY

    def test_never_reorders_points(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(12, 2))
        inst = make_instance(pts, ElementType.CENTERLINE)
        assert np.array_equal(inst.coords(), pts)

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            make_instance([(0, 0), (float("inf"), 1)], "centerline")


class TestComputeDirections:
    def test_straight_segment(self):
        inst = compute_directions(make_instance([(0, 0), (0, 10)], "centerline"))
        assert np.allclose(inst.dirs(), [(0, 1), (0, 1)])

    def test_right_angle_central_chord(self):
        inst = compute_directions(
            make_instance([(0, 0), (1, 0), (1, 1)], "centerline"))
        r2 = math.sqrt(2) / 2
        assert np.allclose(inst.dirs()[1], (r2, r2))

    def test_duplicate_point_fallback(self):
        inst = compute_directions(
            make_instance([(0, 0), (0, 0), (1, 0)], "centerline"))
        dirs = inst.dirs()
        assert np.allclose(dirs[0], (1, 0))
        assert np.allclose(dirs[1], (1, 0))

    def test_all_degenerate_stays_zero(self):
        inst = compute_directions(make_instance([(2, 3), (2, 3)], "centerline"))
        assert np.array_equal(inst.dirs(), np.zeros((2, 2)))

    def test_translation_invariance_bitwise(self):
        # dyadic coordinates with integer shifts keep the arithmetic exact
        rng = np.random.default_rng(11)
        for _ in range(25):
            pts = rng.integers(-64, 64, size=(8, 2)) / 8.0
            base = compute_directions(make_instance(pts, "centerline"))
            shift = rng.integers(-1000, 1000, size=2).astype(float)
            moved = compute_directions(make_instance(pts + shift, "centerline"))
            assert np.array_equal(base.dirs(), moved.dirs())

    def test_reversal_negates_directions(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            pts = rng.normal(size=(7, 2)).cumsum(axis=0)  # no duplicate points
            fwd = compute_directions(make_instance(pts, "centerline")).dirs()
            rev = compute_directions(
                make_instance(pts[::-1], "centerline")).dirs()
            assert np.allclose(rev, -fwd[::-1], atol=1e-12)


class TestVectorMap:
    def test_empty_map_is_valid(self):
        vmap = VectorMap((), frame="ego")
        assert len(vmap) == 0

    def test_unknown_source_rejected(self):
        with pytest.raises(DataError):
            VectorMap((), frame="ego", source_tag="guess")

    def test_cls_mismatch_rejected(self):
        pts = (VectorPoint(0, 0, cls=0), VectorPoint(1, 1, cls=2))
        with pytest.raises(DataError):
            from mapprior.vector_core import VectorInstance
            VectorInstance(pts, ElementType.LANE_DIVIDER)


class TestPerceptionWindow:
    def test_default_extent(self):
        w = PerceptionWindow()
        assert w.as_tuple() == (-15.0, 15.0, -30.0, 30.0)

    def test_degenerate_rejected(self):
        with pytest.raises(DataError):
            PerceptionWindow(1, 1, 0, 5)
