"""gsforge: real-to-sim Gaussian-splatting scene toolkit.

Turns reconstructed Gaussian-splat scenes into simulation assets:
CPU rendering with unbiased plane depth, similarity alignment with
SH-aware attribute transforms, occlusion-aware composition, TSDF
meshing, reconstruction losses, a goal-reaching navigation environment,
and a TCP render service.
"""

from .scene import CameraModel, GaussianScene, SplatRecord
from .sh import eval_sh, sh_basis
from .sh_rotation import real_wigner_matrices, rotate_sh
from .ply import PlyParseError, load_ply, save_ply
from .render import (
    RenderOptions,
    RenderOutput,
    project_splat,
    render,
    render_depth_unbiased,
    render_label_weights,
)
from .transforms import (
    DegenerateGeometryError,
    SimilarityTransform,
    chain_object_transform,
    compose_relative,
    decompose_homogeneous,
    fit_similarity,
    transform_camera,
    transform_scene,
)
from .compose import (
    OrientedBoundingBox,
    PlacementSample,
    RegionSpec,
    crop_by_obb,
    instantiate_episode,
    merge_scenes,
    sample_placement,
)
from .tsdf import TsdfVolume, extract_mesh, fuse_depth
from .mesh import HeightIndex, TriangleMesh, height_query, transform_mesh
from .metrics import (
    DepthPriorPair,
    LossWeights,
    align_mono_depth,
    depth_prior_loss,
    ncc_loss,
    normal_prior_loss,
    patches_from_render,
    psnr,
    scale_loss,
)
from .fitting import TargetView, fd_gradient, fit_scene
from .augment import AugmentationConfig, augment_image
from .env import (
    EnvAssets,
    EnvConfig,
    NavEnv,
    RewardBreakdown,
    RewardWeights,
    evaluate_policy,
    reward_heading,
    run_episode,
    scripted_policy,
    wrap_angle,
)
from .service import RenderService, request_render, start_server

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig",
    "CameraModel",
    "DegenerateGeometryError",
    "DepthPriorPair",
    "EnvAssets",
    "EnvConfig",
    "GaussianScene",
    "HeightIndex",
    "LossWeights",
    "NavEnv",
    "OrientedBoundingBox",
    "PlacementSample",
    "PlyParseError",
    "RegionSpec",
    "RenderOptions",
    "RenderOutput",
    "RenderService",
    "RewardBreakdown",
    "RewardWeights",
    "SimilarityTransform",
    "SplatRecord",
    "TargetView",
    "TriangleMesh",
    "TsdfVolume",
    "align_mono_depth",
    "augment_image",
    "chain_object_transform",
    "compose_relative",
    "crop_by_obb",
    "decompose_homogeneous",
    "depth_prior_loss",
    "eval_sh",
    "evaluate_policy",
    "extract_mesh",
    "fd_gradient",
    "fit_scene",
    "fit_similarity",
    "fuse_depth",
    "height_query",
    "instantiate_episode",
    "load_ply",
    "merge_scenes",
    "ncc_loss",
    "normal_prior_loss",
    "patches_from_render",
    "project_splat",
    "psnr",
    "real_wigner_matrices",
    "render",
    "render_depth_unbiased",
    "render_label_weights",
    "request_render",
    "reward_heading",
    "rotate_sh",
    "run_episode",
    "sample_placement",
    "save_ply",
    "scale_loss",
    "scripted_policy",
    "sh_basis",
    "start_server",
    "transform_camera",
    "transform_mesh",
    "transform_scene",
    "wrap_angle",
]
