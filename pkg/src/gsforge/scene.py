"""Gaussian scene data model and pinhole camera.

Scenes store splat attributes in pre-activation form, exactly as the PLY
carries them: log scales, opacity logits, raw quaternions. Activations
(exp, sigmoid, quaternion normalization) happen at use sites so that a
load / save cycle is lossless.
"""

from dataclasses import dataclass, field

import numpy as np

from .sh import degree_for_coeff_count

# Loaded quaternions may carry export noise up to this deviation from
# unit norm; anything worse is rejected as corrupt.
QUAT_NORM_TOLERANCE = 1e-3

ENVIRONMENT_LABEL = "environment"


@dataclass
class SplatRecord:
    """A single Gaussian primitive (copy, not a view into the scene)."""

    mean: np.ndarray          # (3,) world meters
    rotation: np.ndarray      # (4,) quaternion w,x,y,z
    log_scale: np.ndarray     # (3,) log meters
    opacity_logit: float      # sigmoid gives opacity in (0,1)
    sh: np.ndarray            # (3, (l+1)^2) per-channel SH coefficients
    label: str | None = None

    @property
    def opacity(self):
        return 1.0 / (1.0 + np.exp(-self.opacity_logit))

    @property
    def scale(self):
        return np.exp(self.log_scale)


class GaussianScene:
    """Ordered collection of Gaussian splats with shared SH degree.

    Attributes are stored as float64 struct-of-arrays:

    - ``means``: (N, 3)
    - ``rotations``: (N, 4) quaternions w,x,y,z (near-unit, raw)
    - ``log_scales``: (N, 3)
    - ``opacity_logits``: (N,)
    - ``sh``: (N, 3, (degree+1)^2)
    - ``labels``: optional length-N list of source tags

    Scenes are immutable by convention after construction; operations
    return new scenes. They may be shared read-only across workers.
    """

    def __init__(self, means, rotations, log_scales, opacity_logits, sh,
                 labels=None, validate=True):
        self.means = np.ascontiguousarray(means, dtype=np.float64)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float64)
        self.log_scales = np.ascontiguousarray(log_scales, dtype=np.float64)
        self.opacity_logits = np.ascontiguousarray(opacity_logits, dtype=np.float64)
        self.sh = np.ascontiguousarray(sh, dtype=np.float64)
        self.labels = list(labels) if labels is not None else None
        if validate:
            self.validate()

    def validate(self):
        n = len(self)
        if self.means.shape != (n, 3):
            raise ValueError(f"means must be (N, 3), got {self.means.shape}")
        if self.rotations.shape != (n, 4):
            raise ValueError(f"rotations must be (N, 4), got {self.rotations.shape}")
        if self.log_scales.shape != (n, 3):
            raise ValueError(f"log_scales must be (N, 3), got {self.log_scales.shape}")
        if self.opacity_logits.shape != (n,):
            raise ValueError(f"opacity_logits must be (N,), got {self.opacity_logits.shape}")
        if self.sh.ndim != 3 or self.sh.shape[:2] != (n, 3):
            raise ValueError(f"sh must be (N, 3, K), got {self.sh.shape}")
        degree_for_coeff_count(self.sh.shape[2])  # raises on bad K
        for arr, name in ((self.means, "means"), (self.rotations, "rotations"),
                          (self.log_scales, "log_scales"),
                          (self.opacity_logits, "opacity_logits"), (self.sh, "sh")):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
        if n:
            norms = np.linalg.norm(self.rotations, axis=1)
            worst = np.max(np.abs(norms - 1.0))
            if worst >= QUAT_NORM_TOLERANCE:
                raise ValueError(
                    f"quaternion norm deviates from 1 by {worst:.3g} "
                    f"(tolerance {QUAT_NORM_TOLERANCE:g})"
                )
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels length must equal splat count")

    def __len__(self):
        return self.means.shape[0]

    def __getitem__(self, index):
        return SplatRecord(
            mean=self.means[index].copy(),
            rotation=self.rotations[index].copy(),
            log_scale=self.log_scales[index].copy(),
            opacity_logit=float(self.opacity_logits[index]),
            sh=self.sh[index].copy(),
            label=self.labels[index] if self.labels is not None else None,
        )

    @property
    def sh_degree(self):
        return degree_for_coeff_count(self.sh.shape[2])

    @property
    def opacities(self):
        """Activated opacities, (N,)."""
        return 1.0 / (1.0 + np.exp(-self.opacity_logits))

    @property
    def scales(self):
        """Activated scales, (N, 3) meters."""
        return np.exp(self.log_scales)

    def unit_rotations(self):
        """Quaternions normalized to unit length, (N, 4)."""
        norms = np.linalg.norm(self.rotations, axis=1, keepdims=True)
        return self.rotations / norms

    def rotation_matrices(self):
        """Per-splat rotation matrices from the quaternions, (N, 3, 3)."""
        return quaternions_to_matrices(self.unit_rotations())

    def covariances(self):
        """World-space 3D covariances R S S^T R^T, (N, 3, 3)."""
        r = self.rotation_matrices()
        s = self.scales
        m = r * s[:, None, :]  # columns scaled
        return m @ np.swapaxes(m, 1, 2)

    def subset(self, mask_or_indices):
        labels = None
        if self.labels is not None:
            idx = np.arange(len(self))[mask_or_indices]
            labels = [self.labels[i] for i in idx]
        return GaussianScene(
            self.means[mask_or_indices],
            self.rotations[mask_or_indices],
            self.log_scales[mask_or_indices],
            self.opacity_logits[mask_or_indices],
            self.sh[mask_or_indices],
            labels=labels,
            validate=False,
        )

    def with_labels(self, label):
        """Copy of the scene with every splat tagged ``label``."""
        return GaussianScene(self.means, self.rotations, self.log_scales,
                             self.opacity_logits, self.sh,
                             labels=[label] * len(self), validate=False)

    def copy(self):
        return GaussianScene(self.means.copy(), self.rotations.copy(),
                             self.log_scales.copy(), self.opacity_logits.copy(),
                             self.sh.copy(),
                             labels=list(self.labels) if self.labels else None,
                             validate=False)

    @staticmethod
    def empty(sh_degree=3):
        k = (sh_degree + 1) ** 2
        return GaussianScene(
            np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)),
            np.zeros((0,)), np.zeros((0, 3, k)), validate=False,
        )


def quaternions_to_matrices(q):
    """Convert (..., 4) unit quaternions w,x,y,z to (..., 3, 3) matrices."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quaternion(r):
    """Convert a 3x3 rotation matrix to a unit quaternion w,x,y,z.

    Uses the Shepperd branch selection for numerical stability.
    """
    r = np.asarray(r, dtype=np.float64)
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
        q = np.array([(r[2, 1] - r[1, 2]) / s,
                      0.25 * s,
                      (r[0, 1] + r[1, 0]) / s,
                      (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
        q = np.array([(r[0, 2] - r[2, 0]) / s,
                      (r[0, 1] + r[1, 0]) / s,
                      0.25 * s,
                      (r[1, 2] + r[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
        q = np.array([(r[1, 0] - r[0, 1]) / s,
                      (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)


def quaternion_multiply(q1, q2):
    """Hamilton product of quaternions in w,x,y,z order, broadcastable."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    w1, x1, y1, z1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    w2, x2, y2, z2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera: intrinsics plus a rigid world-to-camera pose.

    Camera space follows the computer-vision convention: x right,
    y down, z forward. ``r_wc`` and ``t_wc`` map world points to camera
    space: X_cam = r_wc @ X_world + t_wc. Pixel (row i, col j) is sampled
    at image-plane coordinates (j + 0.5, i + 0.5).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    r_wc: np.ndarray = field(default_factory=lambda: np.eye(3))
    t_wc: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "r_wc", np.asarray(self.r_wc, dtype=np.float64))
        object.__setattr__(self, "t_wc", np.asarray(self.t_wc, dtype=np.float64))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        r = self.r_wc
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("camera rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0:
            raise ValueError("camera rotation must have determinant +1")

    @staticmethod
    def from_fov(width, height, fov_x, fov_y, r_wc=None, t_wc=None):
        """Build intrinsics from horizontal/vertical fields of view (radians)."""
        fx = width / (2.0 * np.tan(fov_x / 2.0))
        fy = height / (2.0 * np.tan(fov_y / 2.0))
        return CameraModel(fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
                           width=width, height=height,
                           r_wc=np.eye(3) if r_wc is None else r_wc,
                           t_wc=np.zeros(3) if t_wc is None else t_wc)

    @staticmethod
    def looking_at(position, target, up=(0.0, 0.0, 1.0), **intrinsics):
        """Camera at ``position`` with +z axis toward ``target``."""
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        forward = forward / np.linalg.norm(forward)
        up = np.asarray(up, dtype=np.float64)
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-12:
            up = np.array([0.0, 1.0, 0.0])
            right = np.cross(forward, up)
        right = right / np.linalg.norm(right)
        down = np.cross(forward, right)
        r_cw = np.stack([right, down, forward], axis=1)  # camera-to-world
        r_wc = r_cw.T
        t_wc = -r_wc @ position
        return CameraModel(r_wc=r_wc, t_wc=t_wc, **intrinsics)

    @property
    def center(self):
        """Camera center in world coordinates."""
        return -self.r_wc.T @ self.t_wc

    def intrinsic_matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def world_to_camera(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.r_wc.T + self.t_wc

    def project(self, points):
        """Project world points; returns ((..., 2) pixels, (...,) depths)."""
        cam = self.world_to_camera(points)
        z = cam[..., 2]
        u = self.fx * cam[..., 0] / z + self.cx
        v = self.fy * cam[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1), z

    def pixel_ray_grid(self):
        """K^-1 applied to every pixel center; (H, W, 3) with z = 1."""
        j = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        i = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        xs, ys = np.meshgrid(j, i)
        return np.stack([xs, ys, np.ones_like(xs)], axis=-1)
