"""Synthetic fixtures: procedural scenes, arenas, and cone assets.

Used by the demos, the rollout harness when no reconstructed assets are
supplied, and the test suite.
"""

import numpy as np

from .compose import RegionSpec
from .env import EnvAssets
from .mesh import TriangleMesh
from .scene import GaussianScene
from .sh import C0, DC_OFFSET


def solid_color_sh(rgb, sh_degree=0):
    """DC-only SH coefficients decoding exactly to the given color."""
    k = (sh_degree + 1) ** 2
    sh = np.zeros((3, k))
    sh[:, 0] = (np.asarray(rgb, dtype=np.float64) - DC_OFFSET) / C0
    return sh


def random_scene(rng, n_splats, sh_degree=3, extent=1.0, center=(0, 0, 0),
                 scale_range=(0.02, 0.1), labels=None):
    """Random well-formed scene for property tests and benchmarks."""
    quats = rng.normal(size=(n_splats, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    k = (sh_degree + 1) ** 2
    return GaussianScene(
        means=np.asarray(center) + rng.uniform(-extent, extent, size=(n_splats, 3)),
        rotations=quats,
        log_scales=np.log(rng.uniform(*scale_range, size=(n_splats, 3))),
        opacity_logits=rng.uniform(-2.0, 4.0, size=n_splats),
        sh=rng.normal(scale=0.3, size=(n_splats, 3, k)),
        labels=labels,
    )


def flat_splat(position, normal_axis=2, radius=1.0, color=(0.7, 0.7, 0.7),
               opacity_logit=8.0, sh_degree=0):
    """One disk-like splat: large in-plane scales, tiny along one axis."""
    scales = np.full(3, radius)
    scales[normal_axis] = 1e-6
    return GaussianScene(
        means=np.asarray(position, dtype=np.float64)[None],
        rotations=np.array([[1.0, 0.0, 0.0, 0.0]]),
        log_scales=np.log(scales)[None],
        opacity_logits=np.array([float(opacity_logit)]),
        sh=solid_color_sh(color, sh_degree)[None],
    )


def ground_scene(size=5.0, spacing=0.5, z=0.0, sh_degree=0,
                 colors=((0.55, 0.5, 0.45), (0.45, 0.5, 0.55))):
    """Checkered carpet of flattened splats spanning a square arena."""
    half = size / 2.0
    coords = np.arange(-half + spacing / 2.0, half, spacing)
    means = []
    sh = []
    for i, x in enumerate(coords):
        for j, y in enumerate(coords):
            means.append([x, y, z])
            sh.append(solid_color_sh(colors[(i + j) % 2], sh_degree))
    n = len(means)
    scales = np.tile(np.array([spacing, spacing, 1e-6]), (n, 1))
    return GaussianScene(
        means=np.array(means),
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        log_scales=np.log(scales),
        opacity_logits=np.full(n, 8.0),
        sh=np.array(sh),
    )


def cone_scene(color_rgb, height=0.3, base_radius=0.12, layers=5, sh_degree=0):
    """Stack of shrinking blobs approximating a cone, centered at origin."""
    means = []
    scales = []
    for layer in range(layers):
        frac = layer / max(layers - 1, 1)
        means.append([0.0, 0.0, (frac - 0.5) * height])
        r = base_radius * (1.0 - 0.8 * frac)
        scales.append([r, r, height / (2.0 * layers)])
    n = len(means)
    return GaussianScene(
        means=np.array(means),
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        log_scales=np.log(np.array(scales)),
        opacity_logits=np.full(n, 6.0),
        sh=np.tile(solid_color_sh(color_rgb, sh_degree), (n, 1, 1)),
    )


def textured_plane_scene(rng, z=2.0, n=90, half=3.0, freq_range=(2.0, 3.5)):
    """Fronto-parallel plane of fine splats carrying a plaid luminance
    texture; the workhorse fixture for multi-view consistency checks."""
    xs = np.linspace(-half, half, n)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    phase = rng.uniform(0, 2 * np.pi, size=2)
    freq = rng.uniform(*freq_range, size=2)
    pattern = (0.5 + 0.22 * np.sin(freq[0] * gx + phase[0])
               + 0.22 * np.sin(freq[1] * gy + phase[1]))
    n_splats = n * n
    means = np.stack([gx.ravel(), gy.ravel(), np.full(n_splats, z)], axis=1)
    sh = np.zeros((n_splats, 3, 1))
    sh[:, :, 0] = ((np.clip(pattern.ravel(), 0.02, 0.98) - DC_OFFSET)
                   / C0)[:, None]
    spacing = 2 * half / (n - 1)
    return GaussianScene(
        means=means,
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (n_splats, 1)),
        log_scales=np.log(np.tile([spacing, spacing, 1e-6], (n_splats, 1))),
        opacity_logits=np.full(n_splats, 9.0),
        sh=sh,
    )


def flat_ground_mesh(size=5.0, z=0.0):
    """Two triangles spanning the arena square at a fixed height."""
    half = size / 2.0
    vertices = np.array([
        [-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z],
    ])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh(vertices, triangles)


def flat_arena_assets(size=5.0, sh_degree=0, with_mesh=True):
    """Complete asset bundle for a flat square arena.

    Cone regions split the far half of the arena into left/middle/right
    strips; the robot spawns in the near half.
    """
    half = size / 2.0
    third = size / 3.0

    def strip(x0, x1):
        return RegionSpec(polygon=np.array([
            [x0, 0.3], [x1, 0.3], [x1, half - 0.3], [x0, half - 0.3],
        ]), z=0.0)

    regions = {
        "left": strip(-half + 0.3, -half + third),
        "middle": strip(-third / 2.0, third / 2.0),
        "right": strip(half - third, half - 0.3),
    }
    robot_region = RegionSpec(polygon=np.array([
        [-half + 0.3, -half + 0.3], [half - 0.3, -half + 0.3],
        [half - 0.3, -0.3], [-half + 0.3, -0.3],
    ]), z=0.0)

    from .env import COLOR_COMMANDS
    from .transforms import SimilarityTransform

    object_scenes = {name: cone_scene(rgb, sh_degree=sh_degree)
                     for name, rgb in COLOR_COMMANDS.items()}
    alignments = {name: SimilarityTransform.identity() for name in object_scenes}

    return EnvAssets(
        env_scene=ground_scene(size=size, sh_degree=sh_degree),
        object_scenes=object_scenes,
        regions=regions,
        robot_region=robot_region,
        alignments=alignments,
        terrain_mesh=flat_ground_mesh(size=size) if with_mesh else None,
    )
