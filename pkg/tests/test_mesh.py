import numpy as np
import pytest

from gsforge import SimilarityTransform, TriangleMesh, height_query, transform_mesh
from gsforge.mesh import load_obj, load_stl, save_obj, save_stl
from gsforge.synthetic import flat_ground_mesh
from gsforge.tsdf import TsdfVolume, extract_mesh

from conftest import random_rotation


def quad(z, half=1.0):
    vertices = np.array([[-half, -half, z], [half, -half, z],
                         [half, half, z], [-half, half, z]])
    return TriangleMesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]))


class TestHeightQuery:
    def test_flat_plane(self):
        mesh = flat_ground_mesh(size=4.0, z=0.0)
        for x, y in [(0.0, 0.0), (1.5, -1.2), (-1.9, 1.9)]:
            assert height_query(mesh, x, y) == pytest.approx(0.0, abs=1e-12)

    def test_outside_mesh_returns_none(self):
        mesh = flat_ground_mesh(size=2.0)
        assert height_query(mesh, 5.0, 0.0) is None

    def test_stacked_quads_highest_hit(self):
        ground = quad(0.0, half=2.0)
        platform = quad(0.3, half=0.5)
        combined = TriangleMesh(
            np.vstack([ground.vertices, platform.vertices]),
            np.vstack([ground.triangles, platform.triangles + 4]))
        assert height_query(combined, 0.0, 0.0) == pytest.approx(0.3)
        assert height_query(combined, 1.5, 1.5) == pytest.approx(0.0)

    def test_tsdf_ramp_profile_is_monotone(self):
        # slope: z = 0.25 * (x + 1), queried along a line across it
        vol = TsdfVolume.for_bounds([-1.2, -0.6, -0.4], [1.2, 0.6, 1.0], 0.04)
        vol.set_from_sdf(lambda p: (p[:, 2] - 0.25 * (p[:, 0] + 1.0))
                         / np.sqrt(1 + 0.25 ** 2))
        mesh = extract_mesh(vol)
        xs = np.linspace(-0.9, 0.9, 25)
        zs = [height_query(mesh, x, 0.0) for x in xs]
        assert all(z is not None for z in zs)
        zs = np.array(zs)
        assert np.all(np.diff(zs) >= -1e-9)
        analytic = 0.25 * (xs + 1.0)
        assert np.max(np.abs(zs - analytic)) <= 2 * vol.voxel_size


class TestTransformMesh:
    def test_identity(self):
        mesh = quad(0.5)
        out = transform_mesh(mesh, SimilarityTransform.identity())
        assert np.allclose(out.vertices, mesh.vertices)
        assert np.array_equal(out.triangles, mesh.triangles)

    def test_pure_translation(self):
        mesh = quad(0.0)
        out = transform_mesh(mesh, SimilarityTransform(translation=[1, 2, 3]))
        assert np.allclose(out.vertices, mesh.vertices + [1, 2, 3])

    def test_matches_pointwise_application(self, rng):
        mesh = quad(0.2)
        t = SimilarityTransform(rotation=random_rotation(rng),
                                translation=rng.normal(size=3),
                                scale=rng.uniform(0.5, 2.0))
        out = transform_mesh(mesh, t)
        assert np.allclose(out.vertices, t.apply(mesh.vertices), atol=1e-12)
        assert np.array_equal(out.triangles, mesh.triangles)


class TestMeshIO:
    def test_obj_roundtrip(self, tmp_path):
        mesh = quad(0.25)
        save_obj(mesh, tmp_path / "m.obj")
        loaded = load_obj(tmp_path / "m.obj")
        assert np.allclose(loaded.vertices, mesh.vertices, atol=1e-7)
        assert np.array_equal(loaded.triangles, mesh.triangles)

    def test_stl_roundtrip_geometry(self, tmp_path):
        mesh = quad(0.25)
        save_stl(mesh, tmp_path / "m.stl")
        loaded = load_stl(tmp_path / "m.stl")
        assert len(loaded) == len(mesh)
        # STL loses indexing; compare unordered triangle corner sets
        a = np.sort(mesh.triangle_corners().reshape(len(mesh), -1), axis=0)
        b = np.sort(loaded.triangle_corners().reshape(len(loaded), -1), axis=0)
        assert np.allclose(a, b, atol=1e-6)

    def test_truncated_stl_rejected(self, tmp_path):
        mesh = quad(0.0)
        save_stl(mesh, tmp_path / "m.stl")
        data = (tmp_path / "m.stl").read_bytes()
        (tmp_path / "bad.stl").write_bytes(data[:-10])
        with pytest.raises(ValueError, match="truncated"):
            load_stl(tmp_path / "bad.stl")


def test_bad_triangle_indices_rejected():
    with pytest.raises(ValueError, match="out of range"):
        TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))


def test_vertex_normals_unit_length():
    mesh = quad(0.0)
    normals = mesh.compute_vertex_normals()
    assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
    assert np.allclose(np.abs(normals[:, 2]), 1.0)
