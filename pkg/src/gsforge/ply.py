"""Binary PLY serialization for Gaussian scenes.

Implements the de-facto splat PLY layout: a single ``vertex`` element of
float32 properties in the order x, y, z, nx, ny, nz, f_dc_0..2,
f_rest_0..(3*(l+1)^2 - 4), opacity, scale_0..2, rot_0..3. The higher-order
SH block is channel-major (all red coefficients, then green, then blue).
Normals are parsed and ignored; they are written as zeros.
"""

import io

import numpy as np

from .scene import GaussianScene, QUAT_NORM_TOLERANCE


class PlyParseError(ValueError):
    """Raised when a PLY buffer does not match the expected layout."""


def _property_names(sh_degree):
    n_rest = 3 * (sh_degree + 1) ** 2 - 3
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(n_rest)]
    names += ["opacity", "scale_0", "scale_1", "scale_2",
              "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def load_ply(data):
    """Parse a binary little-endian splat PLY into a GaussianScene.

    Parameters
    ----------
    data : bytes or a binary file-like object.
    """
    if isinstance(data, (bytes, bytearray)):
        stream = io.BytesIO(data)
    else:
        stream = data

    magic = stream.readline().strip()
    if magic != b"ply":
        raise PlyParseError("not a PLY file (missing 'ply' magic)")

    fmt = None
    n_vertices = None
    properties = []
    in_vertex_element = False
    while True:
        line = stream.readline()
        if not line:
            raise PlyParseError("unterminated header (no end_header)")
        tokens = line.decode("ascii", errors="replace").strip().split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1:] != ["binary_little_endian", "1.0"]:
                raise PlyParseError(f"unsupported format {' '.join(tokens[1:])}")
            fmt = tokens[1]
        elif tokens[0] == "element":
            if tokens[1] == "vertex":
                n_vertices = int(tokens[2])
                in_vertex_element = True
            else:
                raise PlyParseError(f"unsupported element '{tokens[1]}'")
        elif tokens[0] == "property":
            if not in_vertex_element:
                raise PlyParseError("property declared outside the vertex element")
            if tokens[1] != "float":
                raise PlyParseError(
                    f"property '{tokens[-1]}' has type {tokens[1]}, expected float"
                )
            properties.append(tokens[2])
        elif tokens[0] == "end_header":
            break
        else:
            raise PlyParseError(f"unrecognized header line: {' '.join(tokens)}")

    if fmt is None:
        raise PlyParseError("header missing format declaration")
    if n_vertices is None:
        raise PlyParseError("header missing vertex element")

    n_rest = sum(1 for p in properties if p.startswith("f_rest_"))
    if n_rest % 3 != 0:
        raise PlyParseError(f"f_rest property count {n_rest} is not divisible by 3")
    per_channel = n_rest // 3 + 1
    degree = int(round(np.sqrt(per_channel))) - 1
    if (degree + 1) ** 2 != per_channel or degree > 3:
        raise PlyParseError(
            f"f_rest count {n_rest} does not correspond to an SH degree <= 3"
        )

    index = {name: i for i, name in enumerate(properties)}
    for name in _property_names(degree):
        if name not in index:
            raise PlyParseError(f"missing required property '{name}'")

    payload = stream.read()
    n_props = len(properties)
    expected = n_vertices * n_props * 4
    if len(payload) < expected:
        raise PlyParseError(
            f"element count mismatch: expected {n_vertices} vertices "
            f"({expected} bytes), got {len(payload)} bytes"
        )
    table = np.frombuffer(payload[:expected], dtype="<f4").reshape(n_vertices, n_props)

    def cols(names):
        return table[:, [index[n] for n in names]]

    means = cols(["x", "y", "z"])
    rotations = cols(["rot_0", "rot_1", "rot_2", "rot_3"])
    log_scales = cols(["scale_0", "scale_1", "scale_2"])
    opacity = table[:, index["opacity"]]

    k = per_channel
    sh = np.empty((n_vertices, 3, k), dtype=np.float64)
    sh[:, 0, 0] = table[:, index["f_dc_0"]]
    sh[:, 1, 0] = table[:, index["f_dc_1"]]
    sh[:, 2, 0] = table[:, index["f_dc_2"]]
    if k > 1:
        rest = cols([f"f_rest_{i}" for i in range(n_rest)])
        sh[:, :, 1:] = rest.reshape(n_vertices, 3, k - 1)

    if n_vertices:
        norms = np.linalg.norm(rotations.astype(np.float64), axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst >= QUAT_NORM_TOLERANCE:
            raise PlyParseError(
                f"property 'rot_0..3': quaternion norm off by {worst:.3g}, "
                f"tolerance {QUAT_NORM_TOLERANCE:g}"
            )

    return GaussianScene(means, rotations, log_scales, opacity, sh, validate=False)


def save_ply(scene):
    """Serialize a GaussianScene to canonical binary PLY bytes."""
    degree = scene.sh_degree
    names = _property_names(degree)
    n = len(scene)

    header_lines = ["ply", "format binary_little_endian 1.0",
                    f"element vertex {n}"]
    header_lines += [f"property float {name}" for name in names]
    header_lines.append("end_header")
    header = ("\n".join(header_lines) + "\n").encode("ascii")

    table = np.zeros((n, len(names)), dtype="<f4")
    table[:, 0:3] = scene.means
    table[:, 6] = scene.sh[:, 0, 0]
    table[:, 7] = scene.sh[:, 1, 0]
    table[:, 8] = scene.sh[:, 2, 0]
    k = (degree + 1) ** 2
    if k > 1:
        table[:, 9:9 + 3 * (k - 1)] = scene.sh[:, :, 1:].reshape(n, 3 * (k - 1))
    base = 9 + 3 * (k - 1)
    table[:, base] = scene.opacity_logits
    table[:, base + 1:base + 4] = scene.log_scales
    table[:, base + 4:base + 8] = scene.rotations

    return header + table.tobytes()
