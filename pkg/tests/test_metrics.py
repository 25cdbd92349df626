import numpy as np
import pytest

from gsforge import (
    CameraModel,
    DepthPriorPair,
    GaussianScene,
    LossWeights,
    align_mono_depth,
    depth_prior_loss,
    ncc_loss,
    normal_prior_loss,
    patches_from_render,
    psnr,
    render,
    scale_loss,
)
from gsforge.metrics import PatchPlane
from gsforge.synthetic import random_scene, textured_plane_scene

from conftest import random_unit_vectors


class TestScaleLoss:
    def test_zero_min_scale(self):
        scene = random_scene(np.random.default_rng(0), 3)
        logs = scene.log_scales.copy()
        logs[:, 0] = -800.0  # exp underflows to exactly 0
        scene = GaussianScene(scene.means, scene.rotations, logs,
                              scene.opacity_logits, scene.sh, validate=False)
        assert scale_loss(scene) == 0.0

    def test_single_splat_reads_min_axis(self):
        scene = random_scene(np.random.default_rng(1), 1)
        scene.log_scales[0] = np.log([0.1, 0.2, 0.3])
        assert scale_loss(scene) == pytest.approx(0.1, abs=1e-12)

    def test_matches_bruteforce_oracle(self, rng):
        for _ in range(20):
            scene = random_scene(rng, int(rng.integers(1, 30)))
            expected = np.mean([min(np.exp(scene.log_scales[i]))
                                for i in range(len(scene))])
            assert abs(scale_loss(scene) - expected) < 1e-12

    def test_empty_scene_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            scale_loss(GaussianScene.empty())


class TestAlignMonoDepth:
    def make_pair(self, rng, s, t, noise=0.0, n=50):
        mono = rng.uniform(1.0, 5.0, size=(n, n))
        sfm = s * mono + t
        if noise:
            sfm = sfm * (1.0 + rng.normal(0, noise, size=sfm.shape))
        mask = rng.uniform(size=(n, n)) < 0.2
        return DepthPriorPair(mono=mono, sfm=sfm, mask=mask)

    def test_identity_when_equal(self, rng):
        pair = self.make_pair(rng, 1.0, 0.0)
        s, t, aligned = align_mono_depth(pair)
        assert s == pytest.approx(1.0, abs=1e-9)
        assert t == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(aligned, pair.mono)

    def test_recovers_exact_affine(self, rng):
        s, t, _ = align_mono_depth(self.make_pair(rng, 2.0, 0.5))
        assert s == pytest.approx(2.0, abs=1e-9)
        assert t == pytest.approx(0.5, abs=1e-9)

    def test_noisy_fit_beats_random_perturbations(self, rng):
        pair = self.make_pair(rng, 1.7, 0.3, noise=0.02)
        s, t, _ = align_mono_depth(pair)
        mono = pair.mono[pair.mask]
        sfm = pair.sfm[pair.mask]

        def cost(sv, tv):
            return np.sum((sv * mono + tv - sfm) ** 2)

        best = cost(s, t)
        for _ in range(50):
            assert cost(s + rng.normal(0, 0.02), t + rng.normal(0, 0.02)) >= best

    def test_matches_normal_equations(self, rng):
        pair = self.make_pair(rng, 0.8, -0.2, noise=0.05)
        s, t, _ = align_mono_depth(pair)
        mono = pair.mono[pair.mask]
        sfm = pair.sfm[pair.mask]
        a = np.stack([mono, np.ones_like(mono)], axis=1)
        expected = np.linalg.solve(a.T @ a, a.T @ sfm)
        assert abs(s - expected[0]) < 1e-9
        assert abs(t - expected[1]) < 1e-9

    def test_stores_fit_on_pair(self, rng):
        pair = self.make_pair(rng, 2.0, 0.5)
        align_mono_depth(pair)
        assert pair.scale == pytest.approx(2.0, abs=1e-9)
        assert pair.shift == pytest.approx(0.5, abs=1e-9)

    def test_constant_mono_rejected(self):
        pair = DepthPriorPair(mono=np.ones((4, 4)), sfm=np.ones((4, 4)),
                              mask=np.ones((4, 4), dtype=bool))
        with pytest.raises(ValueError, match="constant"):
            align_mono_depth(pair)

    def test_too_few_pixels_rejected(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = True
        pair = DepthPriorPair(mono=np.random.rand(4, 4),
                              sfm=np.random.rand(4, 4), mask=mask)
        with pytest.raises(ValueError, match="2 valid"):
            align_mono_depth(pair)


def two_view_fixture(seed):
    rng = np.random.default_rng(seed)
    scene = textured_plane_scene(rng)
    w, h = 96, 72
    cam_ref = CameraModel(fx=80, fy=80, cx=w / 2, cy=h / 2, width=w, height=h)
    cam_nbr = CameraModel(fx=80, fy=80, cx=w / 2, cy=h / 2, width=w, height=h,
                          t_wc=-np.array([0.25, 0.04, 0.0]))
    out_ref = render(scene, cam_ref)
    out_nbr = render(scene, cam_nbr)
    return cam_ref, cam_nbr, out_ref, out_nbr


class TestNccLoss:
    def test_identical_images_zero_loss(self, rng):
        cam = CameraModel(fx=80, fy=80, cx=48, cy=36, width=96, height=72)
        image = rng.uniform(size=(72, 96))
        patches = [PatchPlane(center=(30.5, 30.5), normal=np.array([0, 0, -1.0]),
                              offset=-2.0),
                   PatchPlane(center=(60.5, 40.5), normal=np.array([0, 0, -1.0]),
                              offset=-2.0)]
        res = ncc_loss(image, image, cam, cam, patches)
        assert res.used == 2
        assert res.value <= 1e-9

    def test_affine_intensity_invariance(self, rng):
        cam = CameraModel(fx=80, fy=80, cx=48, cy=36, width=96, height=72)
        image = rng.uniform(size=(72, 96))
        variant = 0.7 * image + 0.2
        patches = [PatchPlane(center=(48.5, 36.5), normal=np.array([0, 0, -1.0]),
                              offset=-2.0)]
        res = ncc_loss(image, variant, cam, cam, patches)
        assert res.value <= 1e-6

    def test_true_plane_low_loss_and_perturbation_detected(self):
        cam_ref, cam_nbr, out_ref, out_nbr = two_view_fixture(seed=3)
        patches = patches_from_render(out_ref, cam_ref)
        assert len(patches) > 20
        res = ncc_loss(out_ref.gray, out_nbr.gray, cam_ref, cam_nbr, patches)
        assert res.value <= 0.05
        worse = [PatchPlane(center=p.center, normal=p.normal,
                            offset=1.1 * p.offset) for p in patches]
        res_bad = ncc_loss(out_ref.gray, out_nbr.gray, cam_ref, cam_nbr, worse)
        assert res_bad.value > res.value

    def test_zero_variance_patch_skipped_and_counted(self):
        cam = CameraModel(fx=80, fy=80, cx=48, cy=36, width=96, height=72)
        flat = np.full((72, 96), 0.5)
        patches = [PatchPlane(center=(48.5, 36.5), normal=np.array([0, 0, -1.0]),
                              offset=-2.0)]
        res = ncc_loss(flat, flat, cam, cam, patches)
        assert res.used == 0
        assert res.skipped == 1
        assert res.value == 0.0

    def test_loss_bounded_by_two(self, rng):
        cam = CameraModel(fx=80, fy=80, cx=48, cy=36, width=96, height=72)
        image = rng.uniform(size=(72, 96))
        patches = [PatchPlane(center=(48.5, 36.5), normal=np.array([0, 0, -1.0]),
                              offset=-2.0)]
        res = ncc_loss(image, 1.0 - image, cam, cam, patches)  # anti-correlated
        assert 0.0 <= res.value <= 2.0
        assert res.value > 1.9


class TestNormalPrior:
    def test_zero_when_equal(self, rng):
        field = random_unit_vectors(rng, 64).reshape(8, 8, 3)
        assert normal_prior_loss(field, field) == pytest.approx(0.0, abs=1e-12)

    def test_two_when_opposite(self, rng):
        field = random_unit_vectors(rng, 64).reshape(8, 8, 3)
        assert normal_prior_loss(field, -field) == pytest.approx(2.0, abs=1e-12)

    def test_matches_perpixel_oracle(self, rng):
        a = random_unit_vectors(rng, 64).reshape(8, 8, 3)
        b = random_unit_vectors(rng, 64).reshape(8, 8, 3)
        expected = np.mean([1.0 - a[i, j] @ b[i, j]
                            for i in range(8) for j in range(8)])
        assert abs(normal_prior_loss(a, b) - expected) < 1e-12

    def test_undefined_pixels_excluded(self, rng):
        a = random_unit_vectors(rng, 64).reshape(8, 8, 3)
        b = a.copy()
        b[0, :, :] = 0.0  # undefined rows in the prior
        assert normal_prior_loss(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_no_overlap_rejected(self):
        zeros = np.zeros((4, 4, 3))
        with pytest.raises(ValueError, match="overlap"):
            normal_prior_loss(zeros, zeros)


class TestDepthPrior:
    def test_equal_maps(self, rng):
        d = rng.uniform(1, 3, size=(6, 6))
        assert depth_prior_loss(d, d) == 0.0

    def test_constant_offset(self, rng):
        d = rng.uniform(1, 3, size=(6, 6))
        assert depth_prior_loss(d, d + 0.1) == pytest.approx(0.1, abs=1e-12)

    def test_matches_oracle_with_sentinels(self, rng):
        a = rng.uniform(1, 3, size=(6, 6))
        b = rng.uniform(1, 3, size=(6, 6))
        a[0, 0] = 0.0  # sentinel, excluded
        valid = (a > 0) & (b > 0)
        expected = np.mean(np.abs(a[valid] - b[valid]))
        assert abs(depth_prior_loss(a, b) - expected) < 1e-12


class TestPsnr:
    def test_identical_is_infinite(self, rng):
        img = rng.uniform(size=(8, 8, 3))
        assert psnr(img, img) == float("inf")

    def test_uniform_difference_reference_value(self):
        a = np.zeros((16, 16, 3))
        b = np.full((16, 16, 3), 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    def test_matches_two_pass_oracle(self, rng):
        a = rng.uniform(size=(8, 8, 3))
        b = rng.uniform(size=(8, 8, 3))
        mse = 0.0
        for idx in np.ndindex(a.shape):
            mse += (a[idx] - b[idx]) ** 2
        mse /= a.size
        assert abs(psnr(a, b) - 10 * np.log10(1 / mse)) < 1e-9


def test_loss_weights_validation():
    with pytest.raises(ValueError, match="at least one"):
        LossWeights(photometric=0, scale=0, depth_prior=0, normal_prior=0, ncc=0)
    with pytest.raises(ValueError, match="nonnegative"):
        LossWeights(photometric=-1)
