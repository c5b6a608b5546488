import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxmae.types import PointCloud, renormalize_cloud, validate_cloud

from conftest import make_cloud


class TestValidateCloud:
    def test_boundary_point_is_ok(self):
        pc = PointCloud(points=np.zeros((1, 6)))
        assert validate_cloud(pc).ok

    def test_out_of_range_coordinate(self):
        pc = make_cloud([[1.5, 0.0, 0.0]])
        result = validate_cloud(pc)
        assert not result.ok
        assert "coordinate x out of range" in result.violations[0]
        assert "point 0" in result.violations[0]

    def test_empty_cloud(self):
        pc = PointCloud(points=np.zeros((0, 6)))
        result = validate_cloud(pc)
        assert not result.ok
        assert "N must be >= 1" in result.violations[0]

    def test_nan_is_a_violation(self):
        pts = np.full((1, 6), 0.5)
        pts[0, 1] = np.nan
        assert not validate_cloud(PointCloud(points=pts)).ok

    def test_color_violation_reported(self):
        pts = np.full((1, 6), 0.5)
        pts[0, 4] = -0.2
        result = validate_cloud(PointCloud(points=pts))
        assert "color g out of range" in result.violations[0]

    def test_at_most_ten_violations_reported(self):
        pts = np.full((40, 6), 2.0)
        result = validate_cloud(PointCloud(points=pts))
        assert len(result.violations) == 10


class TestRenormalizeCloud:
    def test_identity_when_already_spanning(self):
        pts = np.array(
            [
                [0.0, 0.0, 0.0, 0.1, 0.2, 0.3],
                [1.0, 1.0, 1.0, 0.4, 0.5, 0.6],
                [0.25, 0.5, 0.75, 0.7, 0.8, 0.9],
            ]
        )
        out = renormalize_cloud(PointCloud(points=pts))
        np.testing.assert_array_equal(out.points, pts)

    def test_two_values_map_to_endpoints(self):
        pc = make_cloud([[2.0, 0.0, 0.0], [4.0, 1.0, 1.0]])
        out = renormalize_cloud(pc)
        np.testing.assert_array_equal(out.coords[:, 0], [0.0, 1.0])

    def test_constant_axis_maps_to_half(self):
        pc = make_cloud([[0.0, 0.0, 7.0], [1.0, 1.0, 7.0]])
        out = renormalize_cloud(pc)
        np.testing.assert_array_equal(out.coords[:, 2], [0.5, 0.5])

    def test_colors_untouched(self, rng):
        pts = rng.uniform(-3.0, 3.0, size=(50, 6))
        out = renormalize_cloud(PointCloud(points=pts))
        np.testing.assert_array_equal(out.colors, pts[:, 3:])

    def test_idempotent_bitwise(self, rng):
        pts = rng.uniform(-5.0, 5.0, size=(64, 6))
        once = renormalize_cloud(PointCloud(points=pts))
        twice = renormalize_cloud(once)
        np.testing.assert_array_equal(once.points, twice.points)

    def test_idempotent_with_constant_axis(self):
        pc = make_cloud([[1.0, 2.0, 3.0], [2.0, 2.0, 4.0]])
        once = renormalize_cloud(pc)
        twice = renormalize_cloud(once)
        np.testing.assert_array_equal(once.points, twice.points)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(1, 40))
    def test_validates_after_renormalize(self, seed, n):
        pts = np.random.default_rng(seed).normal(0.0, 10.0, size=(n, 3))
        colors = np.random.default_rng(seed + 1).uniform(0.0, 1.0, size=(n, 3))
        pc = PointCloud(points=np.hstack([pts, colors]))
        assert validate_cloud(renormalize_cloud(pc)).ok

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            renormalize_cloud(PointCloud(points=np.zeros((0, 6))))


class TestPointCloudShape:
    def test_rejects_wrong_width(self):
        with pytest.raises(ValueError):
            PointCloud(points=np.zeros((3, 5)))

    def test_count_and_views(self, rng):
        pts = rng.uniform(size=(7, 6))
        pc = PointCloud(points=pts)
        assert pc.count == 7
        assert pc.coords.shape == (7, 3)
        assert pc.colors.shape == (7, 3)
