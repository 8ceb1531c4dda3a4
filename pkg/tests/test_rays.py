import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pano_epipolar.epipolar import curve_deviation, epipolar_plane
from pano_epipolar.erp import DomainError, rotation_ypr, sphere_to_pixel
from pano_epipolar.pose import Pose, random_rotation, relative_pose
from pano_epipolar.rays import (
    EncodingConfig,
    Ray,
    depth_samples,
    harmonic,
    plucker,
    positional_encoding,
    ray_for_pixel,
    reproject,
    sample_ray,
)

W, H = 256, 128


def random_pose(rng):
    return Pose(random_rotation(rng), rng.normal(size=3))


class TestRayForPixel:
    def test_identity_center(self):
        ray = ray_for_pixel(Pose.identity(), W / 2, H / 2, W, H)
        np.testing.assert_array_equal(ray.origin, [0, 0, 0])
        np.testing.assert_allclose(ray.direction, [0, 0, 1], atol=1e-15)

    def test_translated(self):
        ray = ray_for_pixel(Pose(np.eye(3), [1, 2, 3]), W / 2, H / 2, W, H)
        np.testing.assert_array_equal(ray.origin, [1, 2, 3])
        np.testing.assert_allclose(ray.direction, [0, 0, 1], atol=1e-15)

    def test_yaw_90(self):
        ray = ray_for_pixel(Pose(rotation_ypr(yaw=np.pi / 2), np.zeros(3)), W / 2, H / 2, W, H)
        np.testing.assert_allclose(ray.direction, [1, 0, 0], atol=1e-15)

    def test_vectorized_unit(self):
        xs, ys = np.meshgrid(np.arange(W) + 0.5, np.arange(H) + 0.5)
        ray = ray_for_pixel(random_pose(np.random.default_rng(0)), xs, ys, W, H)
        assert ray.direction.shape == (H, W, 3)
        np.testing.assert_allclose(np.linalg.norm(ray.direction, axis=-1), 1, atol=1e-12)


class TestSampling:
    def test_two(self):
        np.testing.assert_allclose(depth_samples(2, 0.1, 10.0), [0.1, 10.0])

    def test_ten(self):
        z = depth_samples(10, 0.1, 10.0)
        # step (10 - 0.1) / 9 = 1.1
        assert z[:2] == pytest.approx([0.1, 1.2])
        assert z[-1] == pytest.approx(10.0)
        assert np.all(np.diff(z) > 0)

    @pytest.mark.parametrize("S,near,far", [(1, 0.1, 1.0), (4, 0.0, 1.0), (4, 2.0, 1.0)])
    def test_invalid(self, S, near, far):
        with pytest.raises(DomainError):
            depth_samples(S, near, far)

    def test_points_on_ray(self):
        ray = ray_for_pixel(random_pose(np.random.default_rng(1)), 10.3, 40.7, W, H)
        s = sample_ray(ray, 7)
        np.testing.assert_array_equal(s.points, ray.origin + s.depths[:, None] * ray.direction)
        rel = s.points - ray.origin
        np.testing.assert_allclose(np.cross(rel, ray.direction), 0, atol=1e-12)


class TestReproject:
    def test_forward_point(self):
        pose = random_pose(np.random.default_rng(2))
        x, y, z = reproject(pose.t + pose.R @ [0, 0, 5.0], pose, W, H)
        assert (x, y) == pytest.approx((W / 2, H / 2))
        assert z == pytest.approx(5.0)

    def test_unit_x(self):
        x, y, z = reproject(np.array([1.0, 0, 0]), Pose.identity(), W, H)
        assert (x, y) == pytest.approx(sphere_to_pixel(np.pi / 2, 0.0, W, H))
        assert x == pytest.approx(W / 4)
        assert z == pytest.approx(1.0)

    def test_center_raises(self):
        pose = random_pose(np.random.default_rng(3))
        with pytest.raises(DomainError):
            reproject(pose.t, pose, W, H)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_self_consistency(self, seed):
        rng = np.random.default_rng(seed)
        pose = random_pose(rng)
        px, py = rng.uniform(0, W), rng.uniform(0.5, H - 0.5)
        s = sample_ray(ray_for_pixel(pose, px, py, W, H), 10)
        x, y, z = reproject(s.points, pose, W, H)
        dx = np.abs(x - px)
        assert np.minimum(dx, W - dx).max() <= 1e-9
        assert np.abs(y - py).max() <= 1e-9
        np.testing.assert_allclose(z, s.depths, rtol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_epipolar_consistency(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_pose(rng), random_pose(rng)
        px, py = rng.uniform(0, W), rng.uniform(0.5, H - 0.5)
        s = sample_ray(ray_for_pixel(a, px, py, W, H), 10)
        x, y, _ = reproject(s.points, b, W, H)
        plane = epipolar_plane((px, py), relative_pose(a, b), W, H)
        assert curve_deviation(plane, np.stack([x, y], 1), W, H).max() <= 1e-6

    def test_monotone_depth(self):
        a = Pose.identity()
        b = Pose(np.eye(3), [0.5, 0.2, -1.0])
        s = sample_ray(ray_for_pixel(a, 100.0, 50.0, W, H), 50)
        _, _, z = reproject(s.points, b, W, H)
        # continuity: steps bounded by the sample spacing (triangle inequality)
        assert np.all(np.abs(np.diff(z)) <= np.diff(s.depths) + 1e-12)


class TestPlucker:
    def test_origin(self):
        r = plucker(Ray(np.zeros(3), np.array([0.0, 0, 1])))
        np.testing.assert_array_equal(r.moment, 0)

    def test_unit_x(self):
        # (1,0,0) x (0,0,1) = (0*1 - 0*0, 0*0 - 1*1, 0) = (0,-1,0)
        r = plucker(Ray(np.array([1.0, 0, 0]), np.array([0.0, 0, 1])))
        np.testing.assert_array_equal(r.moment, [0, -1, 0])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-100, 100))
    def test_slide_invariance_and_orthogonality(self, seed, t):
        rng = np.random.default_rng(seed)
        o = rng.normal(size=3) * 5
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        r1 = plucker(Ray(o, d))
        r2 = plucker(Ray(o + t * d, d))
        np.testing.assert_allclose(r1.moment, r2.moment, atol=1e-10 * (1 + abs(t)))
        assert abs(r1.moment @ d) < 1e-10 * (1 + np.linalg.norm(o))


class TestHarmonic:
    def test_zero(self):
        np.testing.assert_array_equal(harmonic(0.0, 3), [0, 1, 0, 1, 0, 1])

    def test_half_pi(self):
        np.testing.assert_allclose(harmonic(np.pi / 2, 1, 2.0), [1, 0], atol=1e-15)

    def test_frequencies(self):
        x = 0.3
        np.testing.assert_allclose(harmonic(x, 3, 2.0),
                                   [np.sin(x), np.cos(x), np.sin(2 * x), np.cos(2 * x), np.sin(4 * x), np.cos(4 * x)])

    def test_vector_length(self):
        assert harmonic(np.arange(6.0), 6).shape == (72,)

    def test_invalid(self):
        with pytest.raises(DomainError):
            harmonic(1.0, 0)
        with pytest.raises(DomainError):
            EncodingConfig(L_r=0)


class TestPositionalEncoding:
    def test_lengths(self):
        r = plucker(Ray(np.zeros(3), np.array([0.0, 0, 1])))
        assert positional_encoding(r, 1.0, EncodingConfig(1, 1)).shape == (14,)
        assert positional_encoding(r, 1.0).shape == (84,)
        assert EncodingConfig().size == 84

    def test_layout(self):
        cfg = EncodingConfig(2, 3)
        r = plucker(Ray(np.array([1.0, 2, 3]), np.array([0.0, 1, 0])))
        g = positional_encoding(r, 0.7, cfg)
        np.testing.assert_allclose(g[:24], harmonic(r.vector(), 2))
        np.testing.assert_allclose(g[24:], harmonic(0.7, 3))

    def test_slide_gives_same_ray_block(self):
        cfg = EncodingConfig(3, 2)
        d = np.array([0.6, 0.0, 0.8])
        g1 = positional_encoding(plucker(Ray(np.array([1.0, 0, 0]), d)), 2.0, cfg)
        g2 = positional_encoding(plucker(Ray(np.array([1.0, 0, 0]) + 4 * d, d)), 5.0, cfg)
        np.testing.assert_allclose(g1[:36], g2[:36], atol=1e-12)
        assert not np.allclose(g1[36:], g2[36:])

    def test_broadcast_depths(self):
        r = plucker(Ray(np.zeros(3), np.array([0.0, 0, 1])))
        z = depth_samples(10)
        g = positional_encoding(r, z)
        assert g.shape == (10, 84)
        np.testing.assert_allclose(g[3], positional_encoding(r, z[3]))
