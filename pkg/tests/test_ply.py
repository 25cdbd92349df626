import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsforge import GaussianScene, PlyParseError, load_ply, save_ply
from gsforge.synthetic import random_scene


def ply_clean(scene):
    """Round a scene through float32 so it is exactly PLY-representable."""
    return GaussianScene(
        scene.means.astype(np.float32), scene.rotations.astype(np.float32),
        scene.log_scales.astype(np.float32),
        scene.opacity_logits.astype(np.float32), scene.sh.astype(np.float32),
        validate=False)


def test_single_zero_vertex_decodes_to_defaults():
    scene = GaussianScene(
        means=np.zeros((1, 3)), rotations=np.array([[1.0, 0, 0, 0]]),
        log_scales=np.zeros((1, 3)), opacity_logits=np.zeros(1),
        sh=np.zeros((1, 3, 1)))
    loaded = load_ply(save_ply(scene))
    assert len(loaded) == 1
    assert np.allclose(loaded.rotations[0], [1, 0, 0, 0])
    assert loaded.opacities[0] == pytest.approx(0.5)
    assert np.allclose(loaded.scales[0], 1.0)


def test_header_layout_and_degree3_counts():
    scene = ply_clean(random_scene(np.random.default_rng(0), 3, sh_degree=3))
    data = save_ply(scene)
    header = data[:data.index(b"end_header")].decode()
    assert header.index("property float x") < header.index("property float f_dc_0")
    assert "property float f_rest_44" in header
    assert "property float f_rest_45" not in header

    loaded = load_ply(data)
    assert loaded.sh_degree == 3
    assert loaded.sh.shape == (3, 3, 16)
    assert loaded.sh[0].size == 48  # 3 channels x (3+1)^2 coefficients


def test_empty_scene_roundtrip():
    data = save_ply(GaussianScene.empty(sh_degree=2))
    assert b"element vertex 0" in data
    assert len(load_ply(data)) == 0


@pytest.mark.parametrize("sh_degree", [0, 1, 2, 3])
def test_roundtrip_bit_exact(sh_degree):
    scene = ply_clean(random_scene(np.random.default_rng(7), 100,
                                   sh_degree=sh_degree))
    data = save_ply(scene)
    assert save_ply(load_ply(data)) == data


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 40), degree=st.integers(0, 3),
       seed=st.integers(0, 2 ** 31))
def test_roundtrip_property(n, degree, seed):
    scene = ply_clean(random_scene(np.random.default_rng(seed), n,
                                   sh_degree=degree))
    data = save_ply(scene)
    assert save_ply(load_ply(data)) == data


def test_missing_property_names_offender():
    scene = ply_clean(random_scene(np.random.default_rng(1), 2, sh_degree=0))
    data = save_ply(scene)
    broken = data.replace(b"property float opacity\n", b"")
    with pytest.raises(PlyParseError, match="opacity"):
        load_ply(broken)


def test_element_count_mismatch_detected():
    scene = ply_clean(random_scene(np.random.default_rng(2), 4, sh_degree=0))
    data = save_ply(scene)
    with pytest.raises(PlyParseError, match="count mismatch"):
        load_ply(data[:-8])


def test_malformed_header_rejected():
    with pytest.raises(PlyParseError, match="magic"):
        load_ply(b"not a ply at all")
    with pytest.raises(PlyParseError, match="format"):
        load_ply(b"ply\nformat ascii 1.0\nend_header\n")


def test_far_off_unit_quaternion_rejected():
    scene = random_scene(np.random.default_rng(3), 2, sh_degree=0)
    data = bytearray(save_ply(scene))
    # overwrite the last vertex's quaternion with garbage
    arr = np.frombuffer(bytes(data[-4 * 4:]), dtype="<f4").copy()
    arr[:] = [3.0, 0.0, 0.0, 0.0]
    data[-4 * 4:] = arr.tobytes()
    with pytest.raises(PlyParseError, match="quaternion"):
        load_ply(bytes(data))


def test_mild_quaternion_noise_tolerated():
    scene = random_scene(np.random.default_rng(4), 2, sh_degree=0)
    noisy = GaussianScene(scene.means, scene.rotations * (1 + 2e-4),
                          scene.log_scales, scene.opacity_logits, scene.sh,
                          validate=False)
    loaded = load_ply(save_ply(noisy))
    assert len(loaded) == 2
