import numpy as np
import pytest

from gsforge import CameraModel, TsdfVolume, extract_mesh, fuse_depth
from gsforge.tsdf import load_volume, save_volume


def plane_depth_map(camera, distance):
    """Analytic z-depth of the frontal plane z = distance."""
    return np.full((camera.height, camera.width), float(distance))


def frontal_camera(width=64, height=48, fx=60.0):
    return CameraModel(fx=fx, fy=fx, cx=width / 2, cy=height / 2,
                       width=width, height=height)


class TestFuseDepth:
    def test_sign_convention_front_positive(self):
        cam = frontal_camera()
        vol = TsdfVolume(origin=[-0.4, -0.3, 0.2], voxel_size=0.05,
                         dims=(17, 13, 40))
        fuse_depth(vol, plane_depth_map(cam, 1.0), cam)

        zs = vol.origin[2] + vol.voxel_size * np.arange(vol.dims[2])
        center = vol.values[8, 6, :]
        weights = vol.weights[8, 6, :]
        near_surface = np.abs(zs - 1.0) < 0.5 * vol.voxel_size
        assert np.all(np.abs(center[near_surface]) < 0.5 * vol.voxel_size
                      / vol.truncation + 1e-12)
        in_front = zs < 1.0 - vol.truncation
        assert np.all(center[in_front & (weights > 0)] == 1.0)
        far_behind = zs > 1.0 + vol.truncation
        assert np.all(weights[far_behind] == 0)  # no far-behind carving

    def test_fusing_same_frame_twice_doubles_weights_only(self):
        cam = frontal_camera()
        vol = TsdfVolume(origin=[-0.4, -0.3, 0.5], voxel_size=0.05,
                         dims=(17, 13, 20))
        fuse_depth(vol, plane_depth_map(cam, 1.0), cam)
        once_values = vol.values.copy()
        once_weights = vol.weights.copy()
        fuse_depth(vol, plane_depth_map(cam, 1.0), cam)
        assert np.allclose(vol.values, once_values, atol=1e-12)
        assert np.array_equal(vol.weights, 2.0 * once_weights)

    def test_conflicting_frames_average_to_midpoint(self):
        cam = frontal_camera()
        voxel = 0.02
        vol = TsdfVolume(origin=[-0.3, -0.2, 0.5], voxel_size=voxel,
                         dims=(31, 21, 50))
        d, delta = 1.0, 0.04
        fuse_depth(vol, plane_depth_map(cam, d), cam)
        fuse_depth(vol, plane_depth_map(cam, d + delta), cam)
        # zero crossing of the averaged field sits at d + delta/2
        zs = vol.origin[2] + voxel * np.arange(vol.dims[2])
        line = vol.values[15, 10, :]
        w = vol.weights[15, 10, :]
        valid = w > 0
        line, zs = line[valid], zs[valid]
        straddle = np.where((line[:-1] > 0) & (line[1:] <= 0))[0]
        assert straddle.size >= 1
        i = straddle[0]
        frac = line[i] / (line[i] - line[i + 1])
        z_cross = zs[i] + frac * voxel
        assert abs(z_cross - (d + delta / 2)) <= voxel

    def test_camera_behind_volume_is_noop_with_warning(self):
        cam = frontal_camera()
        vol = TsdfVolume(origin=[-0.4, -0.3, -3.0], voxel_size=0.05,
                         dims=(17, 13, 10))  # entirely behind the camera
        before = vol.values.copy()
        fuse_depth(vol, plane_depth_map(cam, 1.0), cam)
        assert vol.skipped_frames == 1
        assert np.array_equal(vol.values, before)

    def test_shape_mismatch_rejected(self):
        cam = frontal_camera()
        vol = TsdfVolume(origin=[0, 0, 0], voxel_size=0.1, dims=(4, 4, 4))
        with pytest.raises(ValueError, match="shape"):
            fuse_depth(vol, np.ones((10, 10)), cam)

    def test_order_invariance(self, rng):
        cam = frontal_camera(width=32, height=24)
        depths = [plane_depth_map(cam, 1.0 + 0.02 * k) for k in range(5)]
        vol_a = TsdfVolume(origin=[-0.3, -0.2, 0.6], voxel_size=0.03,
                           dims=(21, 15, 25))
        for d in depths:
            fuse_depth(vol_a, d, cam)
        vol_b = TsdfVolume(origin=[-0.3, -0.2, 0.6], voxel_size=0.03,
                           dims=(21, 15, 25))
        for idx in rng.permutation(5):
            fuse_depth(vol_b, depths[idx], cam)
        assert np.max(np.abs(vol_a.values - vol_b.values)) < 1e-7
        assert np.array_equal(vol_a.weights, vol_b.weights)


class TestExtractMesh:
    def test_analytic_sphere_accuracy_and_watertightness(self):
        vol = TsdfVolume.for_bounds([-0.7] * 3, [0.7] * 3, 0.01)
        vol.set_from_sdf(lambda p: np.linalg.norm(p, axis=1) - 0.5)
        mesh = extract_mesh(vol)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        assert np.mean(np.abs(radii - 0.5)) <= 0.01
        assert mesh.is_watertight()
        # outward orientation
        normals = mesh.face_normals()
        centers = mesh.triangle_corners().mean(axis=1)
        outward = np.einsum("ij,ij->i", normals, centers)
        assert np.mean(outward > 0) > 0.999

    def test_all_positive_volume_gives_empty_mesh(self):
        vol = TsdfVolume(origin=[0, 0, 0], voxel_size=0.1, dims=(8, 8, 8))
        vol.values[:] = 1.0
        vol.weights[:] = 1.0
        mesh = extract_mesh(vol)
        assert len(mesh) == 0

    def test_halfspace_plane_is_exact(self):
        vol = TsdfVolume.for_bounds([-0.5] * 3, [0.5] * 3, 0.05)
        z0 = 0.123
        vol.set_from_sdf(lambda p: p[:, 2] - z0)
        mesh = extract_mesh(vol)
        assert len(mesh) > 0
        assert np.max(np.abs(mesh.vertices[:, 2] - z0)) < 1e-6

    def test_unobserved_cells_do_not_emit_triangles(self):
        vol = TsdfVolume.for_bounds([-0.5] * 3, [0.5] * 3, 0.05)
        vol.set_from_sdf(lambda p: p[:, 2] - 0.0)
        vol.weights[:, :, :] = 0.0
        assert len(extract_mesh(vol)) == 0

    def test_no_degenerate_triangles(self):
        vol = TsdfVolume.for_bounds([-0.6] * 3, [0.6] * 3, 0.02)
        vol.set_from_sdf(lambda p: np.linalg.norm(p, axis=1) - 0.5)
        mesh = extract_mesh(vol)
        assert np.all(mesh.face_areas() > 1e-12)


class TestVolumeCheckpoint:
    def test_roundtrip(self, tmp_path):
        vol = TsdfVolume.for_bounds([-0.2] * 3, [0.2] * 3, 0.05)
        vol.set_from_sdf(lambda p: np.linalg.norm(p, axis=1) - 0.1)
        save_volume(vol, tmp_path / "vol")
        loaded = load_volume(tmp_path / "vol")
        assert loaded.dims == vol.dims
        assert loaded.voxel_size == vol.voxel_size
        assert np.allclose(loaded.values, vol.values, atol=1e-7)
        assert np.allclose(loaded.weights, vol.weights, atol=1e-7)

    def test_truncation_validation(self):
        with pytest.raises(ValueError, match="truncation"):
            TsdfVolume(origin=[0, 0, 0], voxel_size=0.1, dims=(4, 4, 4),
                       truncation=0.05)
