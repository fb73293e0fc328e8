"""Collision cones and minimum-rotation avoidance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcbform.collision import AvoidanceConfig, CollisionCone, adjust_control, build_cones
from bcbform.errors import ConfigurationError

CFG = AvoidanceConfig(r=1.0, d_c=4.0)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            AvoidanceConfig(r=0.0, d_c=1.0)
        with pytest.raises(ConfigurationError):
            AvoidanceConfig(r=2.0, d_c=1.0)
        with pytest.raises(ConfigurationError):
            AvoidanceConfig(r=1.0, d_c=4.0, margin=-0.1)
        with pytest.raises(ConfigurationError):
            AvoidanceConfig(r=1.0, d_c=4.0, margin=3.5)

    def test_margin_inflates_protected_disc(self):
        cfg = AvoidanceConfig(r=1.0, d_c=4.0, margin=0.5)
        assert cfg.protected_radius == 1.5
        cone = build_cones([0.0, 0.0], [[3.0, 0.0]], cfg)[0]
        assert cone.half_angle == pytest.approx(math.asin(1.5 / 3.0))


class TestBuildCones:
    def test_half_angle_reference_value(self):
        # Neighbor at distance 2r gives exactly a 30-degree half angle.
        cones = build_cones([0.0, 0.0], [[2.0, 0.0]], CFG)
        assert len(cones) == 1
        assert cones[0].half_angle == pytest.approx(math.pi / 6)
        assert np.allclose(cones[0].center_dir, [1.0, 0.0])

    def test_activation_threshold_is_closed(self):
        at = build_cones([0.0, 0.0], [[CFG.d_c, 0.0]], CFG)
        beyond = build_cones([0.0, 0.0], [[CFG.d_c + 1e-9, 0.0]], CFG)
        assert len(at) == 1
        assert len(beyond) == 0

    def test_inside_radius_blocks_half_plane(self):
        cones = build_cones([0.0, 0.0], [[0.5, 0.0]], CFG)
        assert cones[0].half_angle == math.pi / 2

    def test_coincident_neighbor_skipped(self):
        assert build_cones([1.0, 1.0], [[1.0, 1.0]], CFG) == []


class TestAdjustControl:
    def test_clear_control_bitwise_unchanged(self):
        u = np.array([0.1, 2.3])
        cones = build_cones([0.0, 0.0], [[3.0, 0.0]], CFG)
        out = adjust_control(u, cones, CFG)
        assert out is u

    def test_blocked_control_rotates_to_cone_boundary(self):
        cones = build_cones([0.0, 0.0], [[2.0, 0.0]], CFG)
        out = adjust_control(np.array([1.0, 0.0]), cones, CFG)
        angle = math.atan2(out[1], out[0])
        assert abs(angle) == pytest.approx(math.pi / 6, abs=1e-9)
        assert np.linalg.norm(out) == pytest.approx(1.0)

    def test_exact_tie_breaks_counterclockwise(self):
        cones = build_cones([0.0, 0.0], [[2.0, 0.0]], CFG)
        out = adjust_control(np.array([1.0, 0.0]), cones, CFG)
        assert out[1] > 0

    def test_surrounded_agent_stops(self):
        # Four neighbors inside the collision radius block every direction.
        neighbors = [[0.5, 0.0], [-0.5, 0.0], [0.0, 0.5], [0.0, -0.5]]
        cones = build_cones([0.0, 0.0], neighbors, CFG)
        out = adjust_control(np.array([1.0, 1.0]), cones, CFG)
        assert np.array_equal(out, [0.0, 0.0])

    def test_zero_control_stays_zero(self):
        cones = build_cones([0.0, 0.0], [[2.0, 0.0]], CFG)
        out = adjust_control(np.zeros(2), cones, CFG)
        assert np.array_equal(out, [0.0, 0.0])

    def test_rotation_envelope_capped_at_right_angle(self):
        # A neighbor dead ahead inside r blocks the whole forward half-plane;
        # the only exits would need a rotation of at least 90 degrees -> stop.
        cones = build_cones([0.0, 0.0], [[0.9, 0.0]], CFG)
        out = adjust_control(np.array([1.0, 0.0]), cones, CFG)
        assert np.array_equal(out, [0.0, 0.0])

    @given(
        st.floats(-math.pi, math.pi),
        st.floats(0.1, 10.0),
        st.lists(
            st.tuples(st.floats(-5.0, 5.0), st.floats(-5.0, 5.0)),
            min_size=0,
            max_size=5,
        ),
    )
    @settings(max_examples=300)
    def test_output_norm_preserved_or_zero(self, ang, mag, pts):
        u = mag * np.array([math.cos(ang), math.sin(ang)])
        cones = build_cones([0.0, 0.0], pts, CFG)
        out = adjust_control(u, cones, CFG)
        n = np.linalg.norm(out)
        assert n == pytest.approx(mag, rel=1e-12) or n == 0.0

    def test_adjusted_direction_clears_all_cones(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            pts = rng.uniform(-5, 5, size=(4, 2))
            u = rng.normal(size=2)
            cones = build_cones([0.0, 0.0], pts, CFG)
            out = adjust_control(u, cones, CFG)
            if not np.any(out):
                continue
            theta = math.atan2(out[1], out[0])
            for c in cones:
                delta = abs(
                    (theta - c.center_angle + math.pi) % (2 * math.pi) - math.pi
                )
                assert delta >= c.half_angle - 1e-9


class TestConeGeometry:
    def test_center_angle(self):
        cone = CollisionCone(center_dir=np.array([0.0, 1.0]), half_angle=0.3)
        assert cone.center_angle == pytest.approx(math.pi / 2)
