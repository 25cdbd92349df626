import numpy as np
import pytest

from gsforge import eval_sh, real_wigner_matrices, rotate_sh

from conftest import random_rotation, random_unit_vectors


def test_identity_rotation_is_noop(rng):
    coeffs = rng.normal(size=(3, 16))
    assert np.allclose(rotate_sh(coeffs, np.eye(3)), coeffs, atol=1e-14)


def test_band0_only_unchanged_under_any_rotation(rng):
    coeffs = np.zeros((3, 1))
    coeffs[:, 0] = rng.normal(size=3)
    for _ in range(5):
        r = random_rotation(rng)
        assert np.allclose(rotate_sh(coeffs, r), coeffs, atol=1e-14)


def test_band_sizes():
    bands = real_wigner_matrices(random_rotation(np.random.default_rng(0)), 3)
    assert [b.shape for b in bands] == [(1, 1), (3, 3), (5, 5), (7, 7)]


def test_wigner_matrices_are_orthogonal(rng):
    for _ in range(10):
        r = random_rotation(rng)
        for band in real_wigner_matrices(r, 3)[1:]:
            eye = band @ band.T
            assert np.allclose(eye, np.eye(len(band)), atol=1e-12)


def test_equivariance_against_direct_basis_evaluation(rng):
    # eval_sh(rotate_sh(c, R), R d) == eval_sh(c, d)
    for _ in range(20):
        r = random_rotation(rng)
        coeffs = rng.normal(size=(3, 16))
        rotated = rotate_sh(coeffs, r)
        for d in random_unit_vectors(rng, 16):
            lhs = eval_sh(rotated, r @ d)
            rhs = eval_sh(coeffs, d)
            assert np.max(np.abs(lhs - rhs)) < 1e-6


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_equivariance_all_degrees(rng, degree):
    r = random_rotation(rng)
    k = (degree + 1) ** 2
    coeffs = rng.normal(size=(3, k))
    rotated = rotate_sh(coeffs, r)
    for d in random_unit_vectors(rng, 8):
        assert np.allclose(eval_sh(rotated, r @ d), eval_sh(coeffs, d), atol=1e-9)


def test_rotation_composition_homomorphism(rng):
    # rotate(rotate(c, R1), R2) == rotate(c, R2 @ R1) at sampled directions
    for _ in range(10):
        r1 = random_rotation(rng)
        r2 = random_rotation(rng)
        coeffs = rng.normal(size=(3, 16))
        two_step = rotate_sh(rotate_sh(coeffs, r1), r2)
        one_step = rotate_sh(coeffs, r2 @ r1)
        for d in random_unit_vectors(rng, 64):
            assert np.allclose(eval_sh(two_step, d), eval_sh(one_step, d),
                               atol=1e-6)


def test_batched_coefficients(rng):
    r = random_rotation(rng)
    coeffs = rng.normal(size=(5, 3, 9))
    rotated = rotate_sh(coeffs, r)
    assert rotated.shape == coeffs.shape
    for i in range(5):
        assert np.allclose(rotated[i], rotate_sh(coeffs[i], r), atol=1e-14)


def test_rejects_non_rotation():
    with pytest.raises(ValueError, match="orthonormal"):
        real_wigner_matrices(np.eye(3) * 2.0, 2)
