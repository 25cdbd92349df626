"""Reconstruction-quality losses and priors.

The geometry losses here drive the desk-scale fitter: a flatness prior
on splat scales, scale/shift alignment of monocular depth against sparse
SfM depth, dense depth and normal priors, and a patch-based multi-view
NCC consistency term warped through per-patch plane homographies.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class DepthPriorPair:
    """Monocular depth next to sparse SfM depth with a validity mask."""

    mono: np.ndarray          # (H, W)
    sfm: np.ndarray           # (H, W), values valid where mask
    mask: np.ndarray          # (H, W) bool
    scale: float = None       # filled by align_mono_depth
    shift: float = None


@dataclass
class LossWeights:
    """Composite-objective weights. The defaults are exposed knobs, not
    tuned constants."""

    photometric: float = 1.0
    scale: float = 100.0
    depth_prior: float = 0.1
    normal_prior: float = 0.05
    ncc: float = 0.2

    def __post_init__(self):
        vals = (self.photometric, self.scale, self.depth_prior,
                self.normal_prior, self.ncc)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


def scale_loss(scene):
    """Mean over splats of the shortest activated scale.

    Drives Gaussians toward flat planes; zero iff every splat has a
    degenerate shortest axis.
    """
    if len(scene) == 0:
        raise ValueError("scale loss is undefined for an empty scene")
    return float(np.mean(np.min(scene.scales, axis=1)))


def align_mono_depth(pair):
    """Least-squares scale/shift fitting mono depth to SfM depth.

    Solves argmin_{s,t} sum over the mask of (s * mono + t - sfm)^2 in
    closed form and returns (s, t, aligned_map). The fitted values are
    also stored on the pair.
    """
    mask = np.asarray(pair.mask, dtype=bool)
    mono = np.asarray(pair.mono, dtype=np.float64)[mask]
    sfm = np.asarray(pair.sfm, dtype=np.float64)[mask]
    if mono.size < 2:
        raise ValueError("need at least 2 valid pixels to align depth")
    if np.ptp(mono) == 0:
        raise ValueError("mono depth is constant over the mask; rank-deficient fit")
    a = np.stack([mono, np.ones_like(mono)], axis=1)
    (s, t), *_ = np.linalg.lstsq(a, sfm, rcond=None)
    pair.scale, pair.shift = float(s), float(t)
    aligned = float(s) * np.asarray(pair.mono, dtype=np.float64) + float(t)
    return float(s), float(t), aligned


@dataclass
class PatchPlane:
    """A square patch anchored in the reference view with its local plane.

    The plane lives in reference-camera coordinates: points X on it
    satisfy normal . X = offset (signs may be flipped jointly).
    """

    center: tuple             # (u, v) pixel coordinates of the anchor
    normal: np.ndarray        # (3,) camera-space plane normal
    offset: float             # signed plane offset


def patches_from_render(output, camera, patch_size=11, stride=8, alpha_min=0.5):
    """Build the patch set from a render's plane-distance and normal maps.

    Patches are anchored on a stride grid at pixels whose accumulated
    alpha exceeds ``alpha_min`` and whose geometry channels are valid,
    with a margin so the patch fits in the reference image.
    """
    half = patch_size // 2
    patches = []
    rays = camera.pixel_ray_grid()
    for i in range(half, camera.height - half, stride):
        for j in range(half, camera.width - half, stride):
            if output.alpha[i, j] <= alpha_min or output.depth[i, j] <= 0:
                continue
            normal = output.normal[i, j]
            # offset recovered from the intersection point: n . (depth * ray)
            point = output.depth[i, j] * rays[i, j]
            patches.append(PatchPlane(center=(j + 0.5, i + 0.5),
                                      normal=normal.copy(),
                                      offset=float(normal @ point)))
    return patches


def _plane_homography(ref_camera, nbr_camera, normal, offset):
    """Pixel-to-pixel homography induced by a plane in the ref camera frame."""
    r_rel = nbr_camera.r_wc @ ref_camera.r_wc.T
    t_rel = nbr_camera.t_wc - r_rel @ ref_camera.t_wc
    k_ref_inv = np.linalg.inv(ref_camera.intrinsic_matrix())
    k_nbr = nbr_camera.intrinsic_matrix()
    h = k_nbr @ (r_rel + np.outer(t_rel, normal) / offset) @ k_ref_inv
    return h


def _bilinear(image, u, v):
    """Sample image at pixel-center coordinates; None outside bounds."""
    x = u - 0.5
    y = v - 0.5
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    if (x0 < 0).any() or (y0 < 0).any() or (x0 + 1 >= image.shape[1]).any() \
            or (y0 + 1 >= image.shape[0]).any():
        return None
    fx = x - x0
    fy = y - y0
    v00 = image[y0, x0]
    v01 = image[y0, x0 + 1]
    v10 = image[y0 + 1, x0]
    v11 = image[y0 + 1, x0 + 1]
    return (v00 * (1 - fx) * (1 - fy) + v01 * fx * (1 - fy)
            + v10 * (1 - fx) * fy + v11 * fx * fy)


@dataclass
class NccResult:
    value: float       # mean over used patches of (1 - NCC)
    used: int
    skipped: int       # zero-variance or out-of-bounds patches

    def __float__(self):
        return self.value


def ncc_loss(ref_gray, nbr_gray, ref_camera, nbr_camera, patches,
             patch_size=11):
    """Patch-based multi-view photometric consistency loss.

    For each patch, reference pixels are warped into the neighbor view
    through the patch plane's homography and compared by normalized
    cross-correlation; the per-patch contribution is 1 - NCC. Patches
    that leave either image or have zero variance are skipped and
    counted in the result.
    """
    ref_gray = np.asarray(ref_gray, dtype=np.float64)
    nbr_gray = np.asarray(nbr_gray, dtype=np.float64)
    half = patch_size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    total = 0.0
    used = 0
    skipped = 0
    for patch in patches:
        h = _plane_homography(ref_camera, nbr_camera, patch.normal, patch.offset)
        u0, v0 = patch.center
        uu, vv = np.meshgrid(u0 + offsets, v0 + offsets)
        ref_vals = _bilinear(ref_gray, uu.ravel(), vv.ravel())
        warped = h @ np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)])
        wu = warped[0] / warped[2]
        wv = warped[1] / warped[2]
        nbr_vals = _bilinear(nbr_gray, wu, wv) if np.all(warped[2] > 0) else None
        if ref_vals is None or nbr_vals is None:
            skipped += 1
            continue
        a = ref_vals - ref_vals.mean()
        b = nbr_vals - nbr_vals.mean()
        var_a = np.sqrt(np.mean(a * a))
        var_b = np.sqrt(np.mean(b * b))
        if var_a == 0 or var_b == 0:
            skipped += 1
            continue
        ncc = np.mean(a * b) / (var_a * var_b)
        total += 1.0 - ncc
        used += 1
    value = total / used if used else 0.0
    return NccResult(value=value, used=used, skipped=skipped)


def normal_prior_loss(rendered_normal, prior_normal):
    """Mean angular error (1 - cosine) where both normal maps are defined.

    Undefined pixels carry a zero vector.
    """
    rendered = np.asarray(rendered_normal, dtype=np.float64)
    prior = np.asarray(prior_normal, dtype=np.float64)
    if rendered.shape != prior.shape:
        raise ValueError("normal maps must share dimensions")
    defined = (np.linalg.norm(rendered, axis=-1) > 0) \
        & (np.linalg.norm(prior, axis=-1) > 0)
    if not np.any(defined):
        raise ValueError("normal maps have no overlapping defined pixels")
    cos = np.einsum("...c,...c->...", rendered, prior)[defined]
    return float(np.mean(1.0 - cos))


def depth_prior_loss(rendered_depth, prior_depth):
    """Mean absolute depth difference over pixels valid in both maps."""
    rendered = np.asarray(rendered_depth, dtype=np.float64)
    prior = np.asarray(prior_depth, dtype=np.float64)
    if rendered.shape != prior.shape:
        raise ValueError("depth maps must share dimensions")
    valid = (rendered > 0) & (prior > 0)
    if not np.any(valid):
        raise ValueError("depth maps have no overlapping valid pixels")
    return float(np.mean(np.abs(rendered[valid] - prior[valid])))


def psnr(image, reference):
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    Identical images return inf.
    """
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise ValueError("images must share dimensions")
    mse = np.mean((image - reference) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
