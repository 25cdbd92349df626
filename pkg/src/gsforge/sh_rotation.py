"""Rotation of real spherical-harmonic coefficients.

Band-l coefficients transform under a 3D rotation by a real
(2l+1) x (2l+1) Wigner matrix. The matrices are built directly from the
rotation matrix with the Ivanic-Ruedenberg recursion (band l from band
l-1 and band 1), which is exact for the degrees used here and avoids
Euler-angle conventions entirely. A per-band sign conjugation adapts the
recursion's basis to the renderer basis of :mod:`gsforge.sh`.
"""

import numpy as np

from .sh import MAX_DEGREE, degree_for_coeff_count

# Maps (x, y, z) components to the band-1 basis order (m = -1, 0, 1).
_P1 = np.array([[0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 0.0]])


def _p(i, l, a, b, m1, prev):
    if b == l:
        return m1[i + 1, 2] * prev[a + l - 1, 2 * l - 2] - m1[i + 1, 0] * prev[a + l - 1, 0]
    if b == -l:
        return m1[i + 1, 2] * prev[a + l - 1, 0] + m1[i + 1, 0] * prev[a + l - 1, 2 * l - 2]
    return m1[i + 1, 1] * prev[a + l - 1, b + l - 1]


def _u(l, m, n, m1, prev):
    return _p(0, l, m, n, m1, prev)


def _v(l, m, n, m1, prev):
    if m == 0:
        return _p(1, l, 1, n, m1, prev) + _p(-1, l, -1, n, m1, prev)
    if m > 0:
        d = 1.0 if m == 1 else 0.0
        return (_p(1, l, m - 1, n, m1, prev) * np.sqrt(1.0 + d)
                - _p(-1, l, -m + 1, n, m1, prev) * (1.0 - d))
    d = 1.0 if m == -1 else 0.0
    return (_p(1, l, m + 1, n, m1, prev) * (1.0 - d)
            + _p(-1, l, -m - 1, n, m1, prev) * np.sqrt(1.0 + d))


def _w(l, m, n, m1, prev):
    if m > 0:
        return _p(1, l, m + 1, n, m1, prev) + _p(-1, l, -m - 1, n, m1, prev)
    return _p(1, l, m - 1, n, m1, prev) - _p(-1, l, -m + 1, n, m1, prev)


def _next_band(l, m1, prev):
    size = 2 * l + 1
    mat = np.zeros((size, size))
    for m in range(-l, l + 1):
        for n in range(-l, l + 1):
            denom = (l + n) * (l - n) if abs(n) < l else (2 * l) * (2 * l - 1)
            u = np.sqrt((l + m) * (l - m) / denom)
            v = (0.5 * np.sqrt((1.0 + (m == 0)) * (l + abs(m) - 1) * (l + abs(m)) / denom)
                 * (1.0 - 2.0 * (m == 0)))
            w = -0.5 * np.sqrt((l - abs(m) - 1) * (l - abs(m)) / denom) * (1.0 - (m == 0))
            val = 0.0
            if u != 0.0:
                val += u * _u(l, m, n, m1, prev)
            if v != 0.0:
                val += v * _v(l, m, n, m1, prev)
            if w != 0.0:
                val += w * _w(l, m, n, m1, prev)
            mat[m + l, n + l] = val
    return mat


def real_wigner_matrices(rotation, degree):
    """Per-band rotation matrices for the renderer SH basis.

    Parameters
    ----------
    rotation : (3, 3) orthonormal matrix.
    degree : highest band to build, 0..3.

    Returns
    -------
    List of ``degree + 1`` matrices; entry l has shape (2l+1, 2l+1).
    Band 0 is the 1x1 identity.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ValueError("rotation must be a 3x3 matrix")
    if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > 1e-6:
        raise ValueError("rotation matrix is not orthonormal")
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"degree must be 0..{MAX_DEGREE}")

    bands = [np.ones((1, 1))]
    if degree >= 1:
        bands.append(_P1 @ rotation @ _P1.T)
        for l in range(2, degree + 1):
            bands.append(_next_band(l, bands[1], bands[-1]))

    # The renderer basis differs from the recursion's basis by a sign of
    # (-1)^m per component; conjugate each band accordingly.
    out = [bands[0]]
    for l in range(1, degree + 1):
        signs = np.array([(-1.0) ** m for m in range(-l, l + 1)])
        out.append(bands[l] * np.outer(signs, signs))
    return out


def rotate_sh(coeffs, rotation):
    """Rotate SH coefficients so colors follow a rotated scene.

    For any unit direction d the rotated coefficients satisfy
    ``eval_sh(rotate_sh(c, R), R @ d) == eval_sh(c, d)``.

    Parameters
    ----------
    coeffs : (..., K) or (..., channels, K) array, K = (degree+1)^2.
    rotation : (3, 3) orthonormal matrix.

    Returns
    -------
    Array of the same shape with bands 1..degree rotated; band 0 is
    unchanged.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    degree = degree_for_coeff_count(coeffs.shape[-1])
    out = coeffs.copy()
    if degree == 0:
        return out
    bands = real_wigner_matrices(rotation, degree)
    for l in range(1, degree + 1):
        sl = slice(l * l, (l + 1) * (l + 1))
        out[..., sl] = coeffs[..., sl] @ bands[l].T
    return out
