"""CPU forward rasterizer for Gaussian scenes.

Splats are projected to 2D image-plane Gaussians with the standard
first-order (Jacobian) linearization, depth-sorted globally by view-space
z of the mean (stable sort, storage index breaks ties), and composited
front to back:

    c(x) = sum_i T_i * c_i * alpha_i,   T_i = prod_{j<i} (1 - alpha_j)

with alpha_i = opacity_i * G_i(x) clamped to 0.99. A splat-pixel pair
contributes iff alpha_i > alpha_cutoff; color weights are additionally
zeroed once transmittance drops below the early-stop threshold (the
transmittance product itself is never truncated, so the alpha map equals
1 - prod(1 - alpha_i) exactly).

Geometry channels ride along in the same pass: each splat defines a
plane through its mean, normal to its shortest scaled axis (sign-flipped
toward the camera). Blending the signed plane offsets and the normals
with the color weights and forming their ratio against the pixel ray
yields per-pixel ray/plane intersection depth, which is exact for
coplanar splats at every pixel, unlike blending mean depths.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .sh import eval_sh

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# 2D covariance regularizer (pixels^2), the usual anti-aliasing floor.
COV2D_BLUR = 0.3


def _thread_count():
    try:
        return max(1, int(os.environ.get("GSFORGE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RenderOptions:
    background: tuple = (0.0, 0.0, 0.0)
    alpha_cutoff: float = 1.0 / 255.0
    early_stop: float = 1e-4
    alpha_floor: float = 0.5        # minimum coverage for valid depth/normal
    eps_ray: float = 1e-6           # grazing-ray rejection on |n_unit . ray|
    near: float = 1e-3              # view-space culling plane, meters
    flatten_for_depth: bool = False  # zero the shortest axis before projecting
    tile_size: int = 16

    def __post_init__(self):
        if not (0.0 < self.alpha_cutoff < 1.0):
            raise ValueError("alpha_cutoff must be in (0, 1)")
        if not (0.0 < self.early_stop < 1.0):
            raise ValueError("early_stop must be in (0, 1)")
        if not (0.0 < self.alpha_floor < 1.0):
            raise ValueError("alpha_floor must be in (0, 1)")


@dataclass
class RenderOutput:
    """Per-pixel maps from one render.

    Sentinel convention: pixels without valid coverage carry 0 in
    ``depth``, ``plane_distance`` and ``depth_mean`` and a zero vector in
    ``normal``.
    """

    rgb: np.ndarray             # (H, W, 3) in [0, 1]
    alpha: np.ndarray           # (H, W) accumulated opacity
    depth: np.ndarray           # (H, W) ray/plane intersection depth, meters
    plane_distance: np.ndarray  # (H, W) blended plane-to-camera distance, meters
    normal: np.ndarray          # (H, W, 3) unit camera-space normals
    gray: np.ndarray            # (H, W) luminance of rgb
    depth_mean: np.ndarray = field(default=None)  # (H, W) mean-depth baseline


def project_splat(splat, camera, options=None):
    """Project one splat to its 2D image-plane Gaussian.

    Returns (mean2d, cov2d, view_depth) with the regularized 2x2
    covariance, or None when the splat lies behind the near plane.
    """
    options = options or RenderOptions()
    from .scene import GaussianScene

    scene = GaussianScene(
        splat.mean[None], splat.rotation[None], splat.log_scale[None],
        np.array([splat.opacity_logit]), splat.sh[None], validate=False,
    )
    proj = _project(scene, camera, options)
    if proj is None or proj["count"] == 0:
        return None
    return proj["mean2d"][0], proj["cov2d"][0], float(proj["depth"][0])


def _project(scene, camera, options):
    """Project all splats in front of the camera; returns sorted arrays."""
    n = len(scene)
    if n == 0:
        return None

    cam_means = scene.means @ camera.r_wc.T + camera.t_wc
    z = cam_means[:, 2]
    front = z > options.near
    if not np.any(front):
        return None

    idx = np.nonzero(front)[0]
    cam_means = cam_means[idx]
    z = z[idx]

    x, y = cam_means[:, 0], cam_means[:, 1]
    u = camera.fx * x / z + camera.cx
    v = camera.fy * y / z + camera.cy
    mean2d = np.stack([u, v], axis=1)

    rot = scene.rotation_matrices()[idx]
    scales = scene.scales[idx]
    if options.flatten_for_depth:
        scales = scales.copy()
        flat_idx = np.argmin(scales, axis=1)
        scales[np.arange(len(scales)), flat_idx] = 1e-9

    m = rot * scales[:, None, :]
    cov3d = m @ np.swapaxes(m, 1, 2)
    cov_cam = np.einsum("ij,njk,lk->nil", camera.r_wc, cov3d, camera.r_wc)

    inv_z = 1.0 / z
    jac = np.zeros((len(z), 2, 3))
    jac[:, 0, 0] = camera.fx * inv_z
    jac[:, 0, 2] = -camera.fx * x * inv_z ** 2
    jac[:, 1, 1] = camera.fy * inv_z
    jac[:, 1, 2] = -camera.fy * y * inv_z ** 2
    cov2d = np.einsum("nij,njk,nlk->nil", jac, cov_cam, jac)
    cov2d[:, 0, 0] += COV2D_BLUR
    cov2d[:, 1, 1] += COV2D_BLUR

    # Per-splat plane: normal along the shortest scaled axis, in camera
    # space, flipped to face the camera; signed offset n . mu_cam.
    short_axis = np.argmin(scene.scales[idx], axis=1)
    normal_world = rot[np.arange(len(idx)), :, short_axis]
    normal_cam = normal_world @ camera.r_wc.T
    dots = np.einsum("ni,ni->n", normal_cam, cam_means)
    flip = dots > 0
    normal_cam[flip] *= -1.0
    plane_offset = np.where(flip, -dots, dots)

    opacity = scene.opacities[idx]

    # View direction from camera center to splat mean, world frame.
    dirs = scene.means[idx] - camera.center
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    colors = np.clip(eval_sh(scene.sh[idx], dirs, validate=False), 0.0, None)

    # Depth sort; stable so equal depths keep storage order.
    order = np.argsort(z, kind="stable")

    return {
        "count": len(idx),
        "index": idx[order],
        "mean2d": mean2d[order],
        "cov2d": cov2d[order],
        "depth": z[order],
        "opacity": opacity[order],
        "color": colors[order],
        "normal": normal_cam[order],
        "plane_offset": plane_offset[order],
    }


def _splat_footprints(proj, options, width, height):
    """Pixel-index bounding boxes covering alpha > alpha_cutoff."""
    a = proj["cov2d"][:, 0, 0]
    b = proj["cov2d"][:, 0, 1]
    c = proj["cov2d"][:, 1, 1]
    half_tr = 0.5 * (a + c)
    lam_max = half_tr + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b ** 2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        reach = np.log(proj["opacity"] / options.alpha_cutoff)
    visible = reach > 0
    radius = np.sqrt(2.0 * np.maximum(reach, 0.0) * lam_max)

    u, v = proj["mean2d"][:, 0], proj["mean2d"][:, 1]
    j_lo = np.maximum(np.ceil(u - 0.5 - radius), 0).astype(np.int64)
    j_hi = np.minimum(np.floor(u - 0.5 + radius), width - 1).astype(np.int64)
    i_lo = np.maximum(np.ceil(v - 0.5 - radius), 0).astype(np.int64)
    i_hi = np.minimum(np.floor(v - 0.5 + radius), height - 1).astype(np.int64)
    visible &= (j_lo <= j_hi) & (i_lo <= i_hi)
    return visible, i_lo, i_hi, j_lo, j_hi


def _composite_tile(proj, sel, rows, cols, options, buffers, tile, group_ids=None,
                    group_buffers=None):
    """Alpha-composite the selected (already depth-ordered) splats on a tile."""
    i0, i1, j0, j1 = tile
    t_final = buffers["t_final"]
    if sel.size == 0:
        t_final[i0:i1, j0:j1] = 1.0
        return

    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    du = (cc.ravel() + 0.5)[None, :] - proj["mean2d"][sel, 0][:, None]   # (K, P)
    dv = (rr.ravel() + 0.5)[None, :] - proj["mean2d"][sel, 1][:, None]
    a = proj["cov2d"][sel, 0, 0][:, None]
    b = proj["cov2d"][sel, 0, 1][:, None]
    c = proj["cov2d"][sel, 1, 1][:, None]
    det = a * c - b * b
    q = (c * du * du - 2.0 * b * du * dv + a * dv * dv) / det
    alpha = np.minimum(proj["opacity"][sel][:, None] * np.exp(-0.5 * q), 0.99)
    alpha = np.where(alpha > options.alpha_cutoff, alpha, 0.0)

    trans = np.cumprod(1.0 - alpha, axis=0)
    t_before = np.empty_like(trans)
    t_before[0] = 1.0
    t_before[1:] = trans[:-1]
    weight = np.where(t_before >= options.early_stop, t_before * alpha, 0.0)

    shape = (i1 - i0, j1 - j0)
    buffers["rgb"][i0:i1, j0:j1] = (weight.T @ proj["color"][sel]).reshape(shape + (3,))
    buffers["wsum"][i0:i1, j0:j1] = weight.sum(axis=0).reshape(shape)
    buffers["dacc"][i0:i1, j0:j1] = (weight.T @ proj["plane_offset"][sel]).reshape(shape)
    buffers["nacc"][i0:i1, j0:j1] = (weight.T @ proj["normal"][sel]).reshape(shape + (3,))
    buffers["zacc"][i0:i1, j0:j1] = (weight.T @ proj["depth"][sel]).reshape(shape)
    t_final[i0:i1, j0:j1] = trans[-1].reshape(shape)

    if group_buffers is not None:
        for g, buf in enumerate(group_buffers):
            members = group_ids[sel] == g
            if np.any(members):
                buf[i0:i1, j0:j1] = weight[members].sum(axis=0).reshape(shape)


def _render_core(scene, camera, options, group_ids=None, n_groups=0):
    h, w = camera.height, camera.width
    buffers = {
        "rgb": np.zeros((h, w, 3)),
        "wsum": np.zeros((h, w)),
        "dacc": np.zeros((h, w)),
        "nacc": np.zeros((h, w, 3)),
        "zacc": np.zeros((h, w)),
        "t_final": np.ones((h, w)),
    }
    group_buffers = [np.zeros((h, w)) for _ in range(n_groups)] if n_groups else None

    proj = _project(scene, camera, options)
    sorted_groups = None
    if proj is not None:
        visible, i_lo, i_hi, j_lo, j_hi = _splat_footprints(proj, options, w, h)
        if group_ids is not None:
            sorted_groups = group_ids[proj["index"]]
        tiles = []
        ts = options.tile_size
        for i0 in range(0, h, ts):
            for j0 in range(0, w, ts):
                tiles.append((i0, min(i0 + ts, h), j0, min(j0 + ts, w)))

        def run_tile(tile):
            i0, i1, j0, j1 = tile
            sel = np.nonzero(visible & (i_lo < i1) & (i_hi >= i0)
                             & (j_lo < j1) & (j_hi >= j0))[0]
            _composite_tile(proj, sel, np.arange(i0, i1), np.arange(j0, j1),
                            options, buffers, tile,
                            group_ids=sorted_groups, group_buffers=group_buffers)

        threads = _thread_count()
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(run_tile, tiles))
        else:
            for tile in tiles:
                run_tile(tile)

    return buffers, group_buffers


def render(scene, camera, options=None):
    """Render a Gaussian scene from a camera; see module docstring."""
    options = options or RenderOptions()
    buffers, _ = _render_core(scene, camera, options)

    background = np.asarray(options.background, dtype=np.float64)
    rgb = np.clip(buffers["rgb"] + buffers["t_final"][..., None] * background, 0.0, 1.0)
    alpha = 1.0 - buffers["t_final"]
    gray = rgb @ LUMA_WEIGHTS

    wsum = buffers["wsum"]
    covered = alpha > options.alpha_floor

    nacc = buffers["nacc"]
    n_len = np.linalg.norm(nacc, axis=-1)
    has_normal = covered & (n_len > 0)
    normal = np.zeros_like(nacc)
    np.divide(nacc, n_len[..., None], out=normal, where=has_normal[..., None])

    rays = camera.pixel_ray_grid()
    denom_unit = np.einsum("hwc,hwc->hw", normal, rays)
    valid = has_normal & (np.abs(denom_unit) >= options.eps_ray)

    depth = np.zeros((camera.height, camera.width))
    denom = np.einsum("hwc,hwc->hw", nacc, rays)
    np.divide(buffers["dacc"], denom, out=depth, where=valid)
    valid &= depth > 0
    depth[~valid] = 0.0

    plane_distance = np.zeros_like(depth)
    np.divide(-buffers["dacc"], wsum, out=plane_distance, where=covered)
    # Naive baseline: unnormalized blend of per-splat mean depths, the
    # usual quick depth pass. Biased wherever coverage is partial.
    depth_mean = np.where(covered, buffers["zacc"], 0.0)
    normal[~covered] = 0.0

    return RenderOutput(rgb=rgb, alpha=alpha, depth=depth,
                        plane_distance=plane_distance, normal=normal,
                        gray=gray, depth_mean=depth_mean)


def render_depth_unbiased(scene, camera, options=None):
    """Render only the geometry channels (depth, plane distance, normals).

    Same compositing pass as :func:`render`; returns the full
    RenderOutput, whose ``depth`` is the ray/plane intersection depth and
    ``depth_mean`` the naive blended-mean baseline.
    """
    return render(scene, camera, options)


def render_label_weights(scene, camera, options=None):
    """Accumulated per-source blending weight maps.

    Returns a dict mapping each distinct splat label to an (H, W) map of
    summed composite weights, quantifying how much each source
    contributes per pixel (occlusion accounting).
    """
    options = options or RenderOptions()
    labels = scene.labels if scene.labels is not None else [None] * len(scene)
    names = sorted(set(labels), key=lambda x: (x is None, x))
    name_to_id = {name: i for i, name in enumerate(names)}
    group_ids = np.array([name_to_id[l] for l in labels], dtype=np.int64)
    _, group_buffers = _render_core(scene, camera, options,
                                    group_ids=group_ids, n_groups=len(names))
    if group_buffers is None:
        group_buffers = [np.zeros((camera.height, camera.width)) for _ in names]
    return {name: group_buffers[i] for name, i in name_to_id.items()}
