"""Observation randomization: photometric jitter, blur, noise, pose noise.

Applied in a fixed order: brightness, contrast, saturation, hue, then
Gaussian blur, then (with small probability) additive Gaussian noise.
All draws come from a caller-supplied Generator so episodes replay
bit-exactly under a fixed seed.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass
class AugmentationConfig:
    """Jitter magnitudes; every range is symmetric around the identity.

    A magnitude of 0 disables the corresponding effect. ``hue`` is a
    fraction of the color wheel (max 0.5).
    """

    brightness: float = 0.0        # factor ~ U(1-b, 1+b)
    contrast: float = 0.0
    saturation: float = 0.0
    hue: float = 0.0
    blur_sigma: float = 0.0        # sigma ~ U(0, blur_sigma), pixels
    noise_probability: float = 0.05
    noise_sigma: float = 0.0
    pose_noise_translation: tuple = (0.0, 0.0, 0.0)   # +- bounds, meters
    pose_noise_rotation: tuple = (0.0, 0.0, 0.0)      # +- bounds, radians

    def __post_init__(self):
        if not (0.0 <= self.noise_probability <= 1.0):
            raise ValueError("noise_probability must be in [0, 1]")
        for name in ("brightness", "contrast", "saturation", "hue", "blur_sigma",
                     "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.hue > 0.5:
            raise ValueError("hue jitter cannot exceed half the color wheel")

    def enabled(self):
        return any((self.brightness, self.contrast, self.saturation, self.hue,
                    self.blur_sigma, self.noise_sigma))


def rgb_to_hsv(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    spread = maxc - minc
    s = np.where(maxc > 0, spread / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(spread > 0, spread, 1.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc,
                 np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(spread > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    channels = [
        np.choose(i, [v, q, p, p, t, v]),
        np.choose(i, [t, v, v, q, p, p]),
        np.choose(i, [p, p, t, v, v, q]),
    ]
    return np.stack(channels, axis=-1)


def augment_image(rgb, config, rng):
    """Apply the randomization chain to a float RGB image in [0, 1]."""
    img = np.asarray(rgb, dtype=np.float64)

    if config.brightness > 0:
        factor = rng.uniform(1.0 - config.brightness, 1.0 + config.brightness)
        img = img * factor
    if config.contrast > 0:
        factor = rng.uniform(1.0 - config.contrast, 1.0 + config.contrast)
        mean_gray = (img @ np.array([0.299, 0.587, 0.114])).mean()
        img = (img - mean_gray) * factor + mean_gray
    if config.saturation > 0:
        factor = rng.uniform(1.0 - config.saturation, 1.0 + config.saturation)
        gray = (img @ np.array([0.299, 0.587, 0.114]))[..., None]
        img = gray + (img - gray) * factor
    if config.hue > 0:
        shift = rng.uniform(-config.hue, config.hue)
        hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
        img = hsv_to_rgb(hsv)

    img = np.clip(img, 0.0, 1.0)

    if config.blur_sigma > 0:
        sigma = rng.uniform(0.0, config.blur_sigma)
        if sigma > 1e-3:
            img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0.0))
    if config.noise_sigma > 0 and rng.uniform() < config.noise_probability:
        img = img + rng.normal(0.0, config.noise_sigma, size=img.shape)

    return np.clip(img, 0.0, 1.0)


def perturb_camera(camera, config, rng):
    """Uniform pose noise: world-frame translation and small Euler tilt."""
    from .scene import CameraModel

    t_bounds = np.asarray(config.pose_noise_translation, dtype=np.float64)
    r_bounds = np.asarray(config.pose_noise_rotation, dtype=np.float64)
    if not t_bounds.any() and not r_bounds.any():
        return camera

    dt = rng.uniform(-t_bounds, t_bounds) if t_bounds.any() else np.zeros(3)
    angles = rng.uniform(-r_bounds, r_bounds) if r_bounds.any() else np.zeros(3)
    cx, sx = np.cos(angles[0]), np.sin(angles[0])
    cy, sy = np.cos(angles[1]), np.sin(angles[1])
    cz, sz = np.cos(angles[2]), np.sin(angles[2])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    noise = rz @ ry @ rx

    center = camera.center + dt
    r_cw = noise @ camera.r_wc.T
    r_wc = r_cw.T
    return CameraModel(fx=camera.fx, fy=camera.fy, cx=camera.cx, cy=camera.cy,
                       width=camera.width, height=camera.height,
                       r_wc=r_wc, t_wc=-r_wc @ center)
