"""Similarity transforms: registration, decomposition, and scene adjustment.

A similarity transform maps x to s * R @ x + t with a pure rotation R and
a positive uniform scale s. This is the alignment class between a
reconstruction's arbitrary frame and the simulator's metric frame.
"""

from dataclasses import dataclass, field

import numpy as np

from .scene import (
    CameraModel,
    GaussianScene,
    matrix_to_quaternion,
    quaternion_multiply,
)
from .sh_rotation import rotate_sh


class DegenerateGeometryError(ValueError):
    """Raised when input geometry cannot determine a transform."""


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        object.__setattr__(self, "scale", float(self.scale))
        r = self.rotation
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must have determinant +1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @staticmethod
    def identity():
        return SimilarityTransform()

    def apply(self, points):
        """Transform (..., 3) points."""
        points = np.asarray(points, dtype=np.float64)
        return self.scale * (points @ self.rotation.T) + self.translation

    def compose(self, other):
        """Transform equal to applying ``other`` first, then ``self``."""
        return SimilarityTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.scale * (self.rotation @ other.translation) + self.translation,
            scale=self.scale * other.scale,
        )

    def inverse(self):
        inv_scale = 1.0 / self.scale
        inv_rot = self.rotation.T
        return SimilarityTransform(
            rotation=inv_rot,
            translation=-inv_scale * (inv_rot @ self.translation),
            scale=inv_scale,
        )

    def to_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m


def fit_similarity(src, dst):
    """Closed-form least-squares similarity registration (Umeyama).

    Finds (s, R, t) minimizing sum ||s R src_i + t - dst_i||^2 over at
    least four non-coplanar correspondences.

    Returns
    -------
    (SimilarityTransform, rms_residual)

    Raises
    ------
    DegenerateGeometryError on fewer than 4 points or coplanar sources.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape:
        raise ValueError("src and dst must be matching (N, 3) arrays")
    n = src.shape[0]
    if n < 4:
        raise DegenerateGeometryError(f"need at least 4 correspondences, got {n}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    d_src = src - mu_src
    d_dst = dst - mu_dst

    singular = np.linalg.svd(d_src, compute_uv=False)
    if singular[2] <= 1e-8 * max(singular[0], 1e-300):
        raise DegenerateGeometryError(
            "source points are coplanar or collinear; registration is underdetermined"
        )

    cov = d_dst.T @ d_src / n
    u, d, vt = np.linalg.svd(cov)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rotation = u @ s @ vt
    var_src = np.mean(np.sum(d_src ** 2, axis=1))
    scale = np.sum(d * np.diag(s)) / var_src
    translation = mu_dst - scale * rotation @ mu_src

    transform = SimilarityTransform(rotation=rotation, translation=translation, scale=scale)
    residual = float(np.sqrt(np.mean(np.sum((transform.apply(src) - dst) ** 2, axis=1))))
    return transform, residual


def compose_relative(t_base, delta_p):
    """Place an object relative to an aligned base transform.

    The result keeps the base rotation and scale; its translation is the
    base transform applied to the offset ``delta_p``.
    """
    delta_p = np.asarray(delta_p, dtype=np.float64)
    return SimilarityTransform(
        rotation=t_base.rotation,
        translation=t_base.apply(delta_p),
        scale=t_base.scale,
    )


def decompose_homogeneous(matrix):
    """Split a 4x4 homogeneous similarity matrix into (R, t, s).

    The upper-left block must equal s * R for a positive s and a proper
    rotation R: equal column norms and mutually orthogonal columns.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4):
        raise ValueError("expected a 4x4 matrix")
    block = m[:3, :3]
    norms = np.linalg.norm(block, axis=0)
    if np.any(norms <= 0):
        raise ValueError("upper-left block has a zero column")
    if (norms.max() - norms.min()) > 1e-6 * norms.max():
        raise ValueError(
            f"non-uniform scale: column norms {norms} differ beyond tolerance"
        )
    gram = block.T @ block
    off = gram - np.diag(np.diag(gram))
    if np.max(np.abs(off)) > 1e-6 * norms.max() ** 2:
        raise ValueError("shear detected: block columns are not orthogonal")
    det = np.linalg.det(block)
    if det <= 0:
        raise ValueError("block determinant is not positive (reflection or collapse)")
    scale = float(np.cbrt(det))
    rotation = block / scale
    # Re-orthonormalize to wash out float noise before the constructor check.
    u, _, vt = np.linalg.svd(rotation)
    rotation = u @ vt
    return SimilarityTransform(rotation=rotation, translation=m[:3, 3], scale=scale)


def chain_object_transform(t_sim_to_env, t_obj_to_sim, t_bbox):
    """Compose the object-to-environment chain, left to right.

    Maps object-local reconstruction coordinates into the environment's
    reconstruction frame via the simulator frame.
    """
    return t_sim_to_env.compose(t_obj_to_sim).compose(t_bbox)


def transform_scene(scene, transform):
    """Apply a similarity transform to every splat attribute.

    Means map as s R mu + t, log scales shift by log s, quaternions are
    left-composed with the rotation (covariances become s^2 R Sigma R^T),
    and SH coefficients rotate so view-dependent colors follow. Opacity
    and labels are unchanged.
    """
    r = transform.rotation
    means = transform.apply(scene.means)
    log_scales = scene.log_scales + np.log(transform.scale)
    q_rot = matrix_to_quaternion(r)
    rotations = quaternion_multiply(q_rot[None, :], scene.unit_rotations())
    sh = rotate_sh(scene.sh, r)
    return GaussianScene(means, rotations, log_scales,
                         scene.opacity_logits.copy(), sh,
                         labels=list(scene.labels) if scene.labels else None,
                         validate=False)


def transform_camera(camera, transform):
    """Move a camera with the world so renders are unchanged.

    The camera center maps through ``transform``; its orientation
    composes with the rotation; intrinsics stay fixed. Camera-space
    coordinates of transformed world points come out uniformly scaled,
    which leaves pinhole projections invariant.
    """
    r = transform.rotation
    r_wc = camera.r_wc @ r.T
    t_wc = transform.scale * camera.t_wc - r_wc @ transform.translation
    return CameraModel(fx=camera.fx, fy=camera.fy, cx=camera.cx, cy=camera.cy,
                       width=camera.width, height=camera.height,
                       r_wc=r_wc, t_wc=t_wc)
