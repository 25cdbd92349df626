"""Real spherical-harmonic basis and color evaluation.

The basis follows the convention used by splat renderers: band constants
are baked in up to degree 3, coefficients are ordered band-major
(m = -l..l within each band), and the DC band carries a +0.5 offset so
that zero coefficients decode to mid gray.
"""

import numpy as np

# Band constants, degree 0..3, in basis order.
C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

DC_OFFSET = 0.5
MAX_DEGREE = 3


def degree_for_coeff_count(n_coeffs):
    """Map a per-channel coefficient count (l+1)^2 to the SH degree l."""
    degree = int(round(np.sqrt(n_coeffs))) - 1
    if degree < 0 or degree > MAX_DEGREE or (degree + 1) ** 2 != n_coeffs:
        raise ValueError(
            f"coefficient count {n_coeffs} is not (l+1)^2 for a degree l <= {MAX_DEGREE}"
        )
    return degree


def sh_basis(dirs, degree):
    """Evaluate the real SH basis at unit directions.

    Parameters
    ----------
    dirs : (..., 3) array of unit direction vectors.
    degree : int, 0..3.

    Returns
    -------
    (..., (degree+1)^2) array of basis values in band-major order.
    """
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"degree must be 0..{MAX_DEGREE}, got {degree}")
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + ((degree + 1) ** 2,), dtype=np.float64)
    out[..., 0] = C0
    if degree >= 1:
        out[..., 1] = -C1 * y
        out[..., 2] = C1 * z
        out[..., 3] = -C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out[..., 4] = C2[0] * xy
        out[..., 5] = C2[1] * yz
        out[..., 6] = C2[2] * (2.0 * zz - xx - yy)
        out[..., 7] = C2[3] * xz
        out[..., 8] = C2[4] * (xx - yy)
    if degree >= 3:
        out[..., 9] = C3[0] * y * (3.0 * xx - yy)
        out[..., 10] = C3[1] * xy * z
        out[..., 11] = C3[2] * y * (4.0 * zz - xx - yy)
        out[..., 12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[..., 13] = C3[4] * x * (4.0 * zz - xx - yy)
        out[..., 14] = C3[5] * z * (xx - yy)
        out[..., 15] = C3[6] * x * (xx - 3.0 * yy)
    return out


def eval_sh(sh_coeffs, direction, validate=True):
    """Decode view-dependent RGB from SH coefficients.

    Parameters
    ----------
    sh_coeffs : (..., 3, K) coefficients, K = (l+1)^2 per channel.
    direction : (..., 3) unit view direction(s), broadcastable against
        the coefficient batch shape.
    validate : check that directions are unit length within 1e-6.

    Returns
    -------
    (..., 3) RGB values including the DC offset. Not clamped; the
    renderer clamps to >= 0.
    """
    sh_coeffs = np.asarray(sh_coeffs, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    degree = degree_for_coeff_count(sh_coeffs.shape[-1])
    if validate:
        norms = np.linalg.norm(direction, axis=-1)
        if not np.all(np.abs(norms - 1.0) <= 1e-6):
            raise ValueError("view directions must be unit length within 1e-6")
    basis = sh_basis(direction, degree)
    return np.einsum("...ck,...k->...c", sh_coeffs, basis) + DC_OFFSET
