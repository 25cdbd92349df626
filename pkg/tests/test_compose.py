import numpy as np
import pytest

from gsforge import (
    CameraModel,
    OrientedBoundingBox,
    RegionSpec,
    RenderOptions,
    SimilarityTransform,
    crop_by_obb,
    instantiate_episode,
    merge_scenes,
    render,
    render_label_weights,
    sample_placement,
    transform_camera,
    transform_scene,
)
from gsforge.compose import CONE_COLORS, REGION_NAMES
from gsforge.synthetic import cone_scene, flat_splat, ground_scene, random_scene

from conftest import random_rotation


def random_similarity(rng):
    return SimilarityTransform(rotation=random_rotation(rng),
                               translation=rng.uniform(-1, 1, size=3),
                               scale=rng.uniform(0.5, 2.0))


class TestCropByObb:
    def test_box_containing_everything(self, rng):
        scene = random_scene(rng, 20, extent=0.5)
        box = OrientedBoundingBox(center=np.zeros(3), half_extents=np.full(3, 10.0))
        inside, outside = crop_by_obb(scene, box)
        assert len(inside) == 20 and len(outside) == 0

    def test_disjoint_box(self, rng):
        scene = random_scene(rng, 20, extent=0.5)
        box = OrientedBoundingBox(center=[100, 0, 0], half_extents=np.ones(3))
        inside, outside = crop_by_obb(scene, box)
        assert len(inside) == 0 and len(outside) == 20

    def test_grid_membership_matches_point_oracle(self):
        coords = np.linspace(-2, 2, 9)
        gx, gy, gz = np.meshgrid(coords, coords, coords, indexing="ij")
        means = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
        n = len(means)
        scene = random_scene(np.random.default_rng(0), n)
        scene = type(scene)(means, scene.rotations, scene.log_scales,
                            scene.opacity_logits, scene.sh)
        box = OrientedBoundingBox(center=np.zeros(3), half_extents=np.ones(3))
        inside, outside = crop_by_obb(scene, box)
        expected = np.all(np.abs(means) <= 1.0, axis=1)
        assert len(inside) == expected.sum()
        assert len(inside) + len(outside) == n

    def test_rotated_box(self, rng):
        r = random_rotation(rng)
        box = OrientedBoundingBox(center=[1, 0, 0], rotation=r,
                                  half_extents=[1, 0.5, 0.25])
        points = rng.uniform(-2, 2, size=(200, 3))
        scene = random_scene(rng, 200)
        scene = type(scene)(points, scene.rotations, scene.log_scales,
                            scene.opacity_logits, scene.sh)
        inside, _ = crop_by_obb(scene, box)
        local = (points - box.center) @ box.rotation
        expected = np.all(np.abs(local) <= box.half_extents, axis=1)
        assert len(inside) == expected.sum()


class TestMergeScenes:
    def test_merge_with_empty_is_identity(self, rng):
        scene = random_scene(rng, 10)
        merged = merge_scenes([scene, type(scene).empty(scene.sh_degree)])
        assert len(merged) == 10
        assert np.allclose(merged.means, scene.means)

    def test_degree_mismatch_rejected(self, rng):
        with pytest.raises(ValueError, match="degree"):
            merge_scenes([random_scene(rng, 2, sh_degree=1),
                          random_scene(rng, 2, sh_degree=2)])

    def test_labels_concatenated(self, rng):
        a = random_scene(rng, 2, labels=["x", "y"])
        b = random_scene(rng, 1)
        merged = merge_scenes([a, b], labels=["env", "obj"])
        assert merged.labels == ["env", "env", "obj"]

    def test_crop_then_merge_is_lossless(self, rng):
        scene = random_scene(rng, 40, extent=1.0, center=(0, 0, 3))
        box = OrientedBoundingBox(center=[0, 0, 3], half_extents=[0.5, 0.5, 0.5])
        inside, outside = crop_by_obb(scene, box)
        merged = merge_scenes([inside, outside])
        cam = CameraModel(fx=30, fy=30, cx=12, cy=9, width=24, height=18)
        a = render(scene, cam)
        b = render(merged, cam)
        assert np.max(np.abs(a.rgb - b.rgb)) < 1e-6

    def test_occlusion_wall_hides_object(self):
        # Opaque wall (a few splat layers deep, like any reconstruction)
        # at z~2 in front of a bright object at z=4.
        wall = merge_scenes([
            flat_splat([0, 0, 2.0 + 0.01 * k], radius=10.0, opacity_logit=14.0,
                       color=(0.5, 0.5, 0.5)) for k in range(3)
        ]).with_labels("environment")
        hidden = random_scene(np.random.default_rng(0), 20, sh_degree=0,
                              extent=0.5, center=(0, 0, 4),
                              scale_range=(0.1, 0.4),
                              labels=["object"] * 20)
        merged = merge_scenes([hidden, wall])  # storage order: object first
        cam = CameraModel(fx=40, fy=40, cx=16, cy=12, width=32, height=24)
        weights = render_label_weights(merged, cam)
        wall_pixels = weights["environment"] > 0.5
        assert wall_pixels.any()
        assert np.max(weights["object"][wall_pixels]) <= 1e-4

    def test_merge_order_does_not_change_render(self, rng):
        a = random_scene(rng, 15, sh_degree=0, extent=0.6, center=(0, 0, 3),
                         scale_range=(0.05, 0.3))
        b = random_scene(rng, 15, sh_degree=0, extent=0.6, center=(0, 0, 3.5),
                         scale_range=(0.05, 0.3))
        cam = CameraModel(fx=40, fy=40, cx=16, cy=12, width=32, height=24)
        ab = render(merge_scenes([a, b]), cam)
        ba = render(merge_scenes([b, a]), cam)
        assert np.max(np.abs(ab.rgb - ba.rgb)) < 1e-6


class TestRenderTransformConsistency:
    def test_similarity_moves_scene_and_camera_together(self, rng):
        scene = random_scene(rng, 60, sh_degree=2, extent=0.8,
                             center=(0, 0, 3), scale_range=(0.05, 0.25))
        cam = CameraModel(fx=50, fy=50, cx=20, cy=15, width=40, height=30)
        base = render(scene, cam)
        for _ in range(5):
            t = random_similarity(rng)
            moved = render(transform_scene(scene, t), transform_camera(cam, t))
            assert np.max(np.abs(moved.rgb - base.rgb)) < 1e-5
            assert np.max(np.abs(moved.alpha - base.alpha)) < 1e-5

    def test_depth_scales_with_transform(self, rng):
        scene = flat_splat([0, 0, 2.0], radius=10.0)
        cam = CameraModel(fx=40, fy=40, cx=16, cy=12, width=32, height=24)
        t = SimilarityTransform(scale=3.0)
        base = render(scene, cam)
        moved = render(transform_scene(scene, t), transform_camera(cam, t))
        covered = base.depth > 0
        assert np.allclose(moved.depth[covered], 3.0 * base.depth[covered],
                           atol=1e-6)


def square_region(cx, cy, half, z=0.0):
    return RegionSpec(polygon=np.array([
        [cx - half, cy - half], [cx + half, cy - half],
        [cx + half, cy + half], [cx - half, cy + half]]), z=z)


class TestSamplePlacement:
    def region_specs(self):
        return {
            "left": square_region(-1.5, 1.0, 0.5),
            "middle": square_region(0.0, 1.0, 0.5, z=0.3),
            "right": square_region(1.5, 1.0, 0.5),
        }

    def test_degenerate_point_regions_are_deterministic(self):
        specs = {name: RegionSpec(polygon=np.array([[i, 1.0]]), z=0.0)
                 for i, name in enumerate(REGION_NAMES)}
        robot = RegionSpec(polygon=np.array([[0.0, -1.0]]), z=0.0,
                           yaw_range=(0.5, 0.5))
        for seed in range(3):
            placement = sample_placement(np.random.default_rng(seed), specs, robot)
            assert np.allclose(placement.robot_position, [0, -1, 0])
            assert placement.robot_yaw == 0.5
            for i, cone in enumerate(placement.cones):
                assert np.allclose(cone.position[:2], [i, 1.0])

    def test_one_cone_per_region_distinct_colors(self, rng):
        robot = square_region(0, -1, 0.5)
        for _ in range(100):
            placement = sample_placement(rng, self.region_specs(), robot)
            assert [c.region for c in placement.cones] == list(REGION_NAMES)
            assert sorted(c.color for c in placement.cones) == sorted(CONE_COLORS)

    def test_positions_inside_regions_with_region_height(self, rng):
        specs = self.region_specs()
        robot = square_region(0, -1, 0.5)
        for _ in range(200):
            placement = sample_placement(rng, specs, robot)
            for cone in placement.cones:
                spec = specs[cone.region]
                lo = spec.polygon.min(axis=0)
                hi = spec.polygon.max(axis=0)
                assert np.all(cone.position[:2] >= lo - 1e-12)
                assert np.all(cone.position[:2] <= hi + 1e-12)
                assert cone.position[2] == spec.z

    def test_uniform_mean_within_three_sigma(self):
        rng = np.random.default_rng(5)
        robot = square_region(0.0, 0.0, 0.5)  # unit square
        n = 10_000
        xs = np.empty((n, 2))
        for k in range(n):
            placement = sample_placement(rng, self.region_specs(), robot)
            xs[k] = placement.robot_position[:2]
        # uniform on a unit square: sd = 1/sqrt(12) per axis
        sigma = (1.0 / np.sqrt(12.0)) / np.sqrt(n)
        assert np.all(np.abs(xs.mean(axis=0)) <= 3 * sigma)

    def test_color_assignment_uniform_over_permutations(self):
        rng = np.random.default_rng(6)
        robot = square_region(0, -1, 0.5)
        n = 6000
        counts = {}
        for _ in range(n):
            placement = sample_placement(rng, self.region_specs(), robot)
            key = tuple(c.color for c in placement.cones)
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        expected = n / 6
        sigma = np.sqrt(n * (1 / 6) * (5 / 6))
        for value in counts.values():
            assert abs(value - expected) <= 3 * sigma

    def test_deterministic_under_fixed_seed(self):
        robot = square_region(0, -1, 0.5)
        a = sample_placement(np.random.default_rng(42), self.region_specs(), robot)
        b = sample_placement(np.random.default_rng(42), self.region_specs(), robot)
        assert np.allclose(a.robot_position, b.robot_position)
        assert a.robot_yaw == b.robot_yaw
        for ca, cb in zip(a.cones, b.cones):
            assert ca.color == cb.color and np.allclose(ca.position, cb.position)

    def test_empty_region_rejected_at_construction(self):
        with pytest.raises(ValueError, match="polygon"):
            RegionSpec(polygon=np.zeros((0, 2)))

    def test_missing_region_rejected(self):
        specs = self.region_specs()
        del specs["left"]
        with pytest.raises(ValueError, match="left"):
            sample_placement(np.random.default_rng(0), specs,
                             square_region(0, -1, 0.5))


class TestInstantiateEpisode:
    def placement(self, rng):
        return sample_placement(
            rng,
            {"left": square_region(-1.5, 1.0, 0.4),
             "middle": square_region(0.0, 1.0, 0.4, z=0.3),
             "right": square_region(1.5, 1.0, 0.4)},
            square_region(0, -1, 0.4))

    def test_no_objects_returns_environment(self, rng):
        env = ground_scene(size=2.0, sh_degree=0)
        composed, transforms = instantiate_episode(env, {}, self.placement(rng), {})
        assert len(composed) == len(env)
        assert transforms == {}
        assert np.allclose(composed.means, env.means)

    def test_cone_centroid_lands_on_placement(self, rng):
        env = ground_scene(size=4.0, sh_degree=0)
        objects = {color: cone_scene(rgb, sh_degree=0) for color, rgb in
                   (("red", (1, 0, 0)), ("green", (0, 1, 0)), ("blue", (0, 0, 1)))}
        alignments = {color: random_similarity(rng) for color in objects}
        placement = self.placement(rng)
        composed, transforms = instantiate_episode(env, objects, placement,
                                                   alignments)
        for cone in placement.cones:
            members = [k for k, lbl in enumerate(composed.labels)
                       if lbl == cone.color]
            centroid = composed.means[members].mean(axis=0)
            assert np.max(np.abs(centroid - cone.position)) < 1e-6
            # returned transform reproduces the merged splats exactly
            moved = transforms[cone.color].apply(objects[cone.color].means)
            assert np.allclose(moved, composed.means[members], atol=1e-9)

    def test_missing_alignment_raises(self, rng):
        env = ground_scene(size=2.0, sh_degree=0)
        objects = {"red": cone_scene((1, 0, 0), sh_degree=0)}
        with pytest.raises(KeyError, match="red"):
            instantiate_episode(env, objects, self.placement(rng), {})

    def test_render_matches_hand_merged_scene(self, rng):
        env = ground_scene(size=4.0, sh_degree=0)
        objects = {"red": cone_scene((1, 0, 0), sh_degree=0)}
        alignments = {"red": SimilarityTransform.identity()}
        placement = self.placement(rng)
        composed, transforms = instantiate_episode(env, objects, placement,
                                                   alignments)
        hand = merge_scenes(
            [env.with_labels("environment"),
             transform_scene(objects["red"], transforms["red"]).with_labels("red")])
        cam = CameraModel.looking_at([0, -3, 1.5], [0, 1, 0], fx=30, fy=30,
                                     cx=16, cy=12, width=32, height=24)
        a = render(composed, cam)
        b = render(hand, cam)
        assert np.array_equal(a.rgb, b.rgb)
