"""Scene composition: OBB cropping, merging, and episode randomization.

Merged scenes keep per-splat source labels; because rendering depth-sorts
all splats jointly, occluders from any source correctly hide occludees
from any other (z-buffer behavior at splat granularity).
"""

from dataclasses import dataclass, field

import numpy as np

from .scene import ENVIRONMENT_LABEL, GaussianScene
from .transforms import SimilarityTransform

CONE_COLORS = ("red", "green", "blue")
REGION_NAMES = ("left", "middle", "right")


@dataclass(frozen=True, eq=False)
class OrientedBoundingBox:
    center: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    half_extents: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "half_extents",
                           np.asarray(self.half_extents, dtype=np.float64))
        if np.any(self.half_extents <= 0):
            raise ValueError("half_extents must be positive")
        r = self.rotation
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("obb rotation is not orthonormal")

    def contains(self, points):
        """Boolean mask of points inside the box (boundary inclusive)."""
        local = (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation
        return np.all(np.abs(local) <= self.half_extents, axis=-1)


def crop_by_obb(scene, obb):
    """Partition a scene by splat-mean membership in an oriented box.

    Returns (inside_scene, outside_scene); every splat lands in exactly
    one of the two.
    """
    inside = obb.contains(scene.means)
    return scene.subset(inside), scene.subset(~inside)


def merge_scenes(scenes, labels=None):
    """Concatenate scenes of equal SH degree into one.

    Parameters
    ----------
    scenes : iterable of GaussianScene.
    labels : optional per-scene tag list; when given, every splat of
        scene i is labeled labels[i], overriding existing labels.
    """
    scenes = list(scenes)
    if labels is not None and len(labels) != len(scenes):
        raise ValueError("labels must match the number of scenes")
    scenes_nonempty = [s for s in scenes if len(s)]
    if not scenes_nonempty:
        return scenes[0].copy() if scenes else GaussianScene.empty()

    degree = scenes_nonempty[0].sh_degree
    for s in scenes_nonempty[1:]:
        if s.sh_degree != degree:
            raise ValueError(
                f"cannot merge scenes of SH degree {degree} and {s.sh_degree}"
            )

    out_labels = None
    if labels is not None:
        out_labels = []
        for tag, s in zip(labels, scenes):
            out_labels.extend([tag] * len(s))
    elif any(s.labels is not None for s in scenes):
        out_labels = []
        for s in scenes:
            out_labels.extend(s.labels if s.labels is not None else [None] * len(s))

    return GaussianScene(
        np.concatenate([s.means for s in scenes_nonempty]),
        np.concatenate([s.rotations for s in scenes_nonempty]),
        np.concatenate([s.log_scales for s in scenes_nonempty]),
        np.concatenate([s.opacity_logits for s in scenes_nonempty]),
        np.concatenate([s.sh for s in scenes_nonempty]),
        labels=out_labels,
        validate=False,
    )


@dataclass(frozen=True)
class RegionSpec:
    """Convex ground region: 2D polygon at a fixed height."""

    polygon: np.ndarray     # (V, 2) vertices, counter-clockwise
    z: float = 0.0
    yaw_range: tuple = (-np.pi, np.pi)

    def __post_init__(self):
        object.__setattr__(self, "polygon", np.asarray(self.polygon, dtype=np.float64))
        if self.polygon.ndim != 2 or self.polygon.shape[1] != 2 or len(self.polygon) < 1:
            raise ValueError("polygon must be (V, 2) with V >= 1")


@dataclass
class ConePlacement:
    color: str
    region: str
    position: np.ndarray    # (3,)


@dataclass
class PlacementSample:
    robot_position: np.ndarray   # (3,)
    robot_yaw: float
    cones: list                  # three ConePlacement, one per region

    def cone_by_color(self, color):
        for cone in self.cones:
            if cone.color == color:
                return cone
        raise KeyError(f"no cone with color {color!r}")


def _sample_in_polygon(rng, polygon):
    """Uniform point in a convex polygon via fan triangulation."""
    if len(polygon) == 1:
        return polygon[0].copy()
    if len(polygon) == 2:
        return polygon[0] + rng.uniform() * (polygon[1] - polygon[0])
    v0 = polygon[0]
    edges = polygon[1:]

    def cross2(a, b):
        return a[0] * b[1] - a[1] * b[0]

    areas = np.array([
        0.5 * abs(cross2(edges[i] - v0, edges[i + 1] - v0))
        for i in range(len(edges) - 1)
    ])
    total = areas.sum()
    if total <= 0:
        return v0.copy()
    tri = rng.choice(len(areas), p=areas / total)
    a, b, c = v0, edges[tri], edges[tri + 1]
    r1, r2 = rng.uniform(), rng.uniform()
    s1 = np.sqrt(r1)
    return a * (1 - s1) + b * (s1 * (1 - r2)) + c * (s1 * r2)


def sample_placement(rng, region_specs, robot_spec):
    """Draw one episode placement.

    The robot pose is uniform over its region and yaw range; the three
    cone colors are assigned to the three regions by a uniformly random
    bijection; each cone position is uniform within its region.

    Parameters
    ----------
    rng : numpy Generator (fixed seed gives a fixed placement).
    region_specs : mapping region name -> RegionSpec for the names
        'left', 'middle', 'right'.
    robot_spec : RegionSpec for the robot spawn area.
    """
    for name in REGION_NAMES:
        if name not in region_specs:
            raise ValueError(f"missing region spec {name!r}")
        if len(region_specs[name].polygon) == 0:
            raise ValueError(f"region {name!r} is empty")

    xy = _sample_in_polygon(rng, robot_spec.polygon)
    robot_position = np.array([xy[0], xy[1], robot_spec.z])
    lo, hi = robot_spec.yaw_range
    robot_yaw = float(rng.uniform(lo, hi)) if hi > lo else float(lo)

    colors = list(CONE_COLORS)
    perm = rng.permutation(len(colors))
    cones = []
    for region_name, color_idx in zip(REGION_NAMES, perm):
        spec = region_specs[region_name]
        pos_xy = _sample_in_polygon(rng, spec.polygon)
        cones.append(ConePlacement(
            color=colors[color_idx],
            region=region_name,
            position=np.array([pos_xy[0], pos_xy[1], spec.z]),
        ))
    return PlacementSample(robot_position=robot_position, robot_yaw=robot_yaw,
                           cones=cones)


def instantiate_episode(env_scene, object_scenes, placement, alignments):
    """Compose one episode scene from the environment and placed objects.

    Each object scene is first mapped into the environment frame by its
    alignment transform (typically a :func:`chain_object_transform`
    product), then translated so its splat centroid lands exactly on the
    sampled placement position.

    Parameters
    ----------
    env_scene : GaussianScene of the environment.
    object_scenes : mapping color -> GaussianScene (object-local frame).
    placement : PlacementSample.
    alignments : mapping color -> SimilarityTransform into the
        environment frame.

    Returns
    -------
    (composed_scene, mesh_transforms) where mesh_transforms maps each
    color to the full SimilarityTransform that was applied, letting the
    caller move the matching collision meshes identically.
    """
    from .transforms import transform_scene

    parts = [env_scene if env_scene.labels is not None
             else env_scene.with_labels(ENVIRONMENT_LABEL)]
    mesh_transforms = {}
    for cone in placement.cones:
        color = cone.color
        if color not in object_scenes:
            continue
        if color not in alignments:
            raise KeyError(f"missing alignment transform for object {color!r}")
        base = alignments[color]
        if len(object_scenes[color]) == 0:
            raise ValueError(f"object scene {color!r} is empty")
        centroid = base.apply(object_scenes[color].means).mean(axis=0)
        shift = cone.position - centroid
        total = SimilarityTransform(rotation=base.rotation,
                                    translation=base.translation + shift,
                                    scale=base.scale)
        parts.append(transform_scene(object_scenes[color], total).with_labels(color))
        mesh_transforms[color] = total

    return merge_scenes(parts), mesh_transforms
