"""Truncated signed distance fusion and marching-cubes extraction.

The volume samples a signed distance field on grid nodes at
``origin + index * voxel_size``. Stored values are distances divided by
the truncation, clamped to [-1, 1]; negative is behind the surface.
Each fused frame contributes with weight 1 to a running average, and
updates are restricted to the truncation band behind the surface so thin
structures are not eroded.
"""

import json
from pathlib import Path

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .mesh import TriangleMesh

DEFAULT_TRUNCATION_VOXELS = 4.0


class TsdfVolume:
    """Voxel grid of truncated signed distances with fusion weights."""

    def __init__(self, origin, voxel_size, dims, truncation=None):
        self.origin = np.asarray(origin, dtype=np.float64)
        self.voxel_size = float(voxel_size)
        self.dims = tuple(int(d) for d in dims)
        if any(d <= 0 for d in self.dims):
            raise ValueError("dims must be positive")
        self.truncation = (float(truncation) if truncation is not None
                           else DEFAULT_TRUNCATION_VOXELS * self.voxel_size)
        if self.truncation < self.voxel_size:
            raise ValueError("truncation must be at least one voxel")
        self.values = np.ones(self.dims, dtype=np.float64)
        self.weights = np.zeros(self.dims, dtype=np.float64)
        self.skipped_frames = 0

    @staticmethod
    def for_bounds(lower, upper, voxel_size, truncation=None):
        """Volume covering the axis-aligned box [lower, upper]."""
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        dims = np.ceil((upper - lower) / voxel_size).astype(int) + 1
        return TsdfVolume(lower, voxel_size, dims, truncation)

    def node_positions(self):
        """World positions of all grid nodes, (nx*ny*nz, 3)."""
        axes = [self.origin[k] + self.voxel_size * np.arange(self.dims[k])
                for k in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)

    def set_from_sdf(self, sdf_fn, weight=1.0):
        """Fill values directly from an analytic signed-distance function."""
        sdf = sdf_fn(self.node_positions()).reshape(self.dims)
        self.values = np.clip(sdf / self.truncation, -1.0, 1.0)
        self.weights = np.full(self.dims, float(weight))
        return self


def fuse_depth(volume, depth_map, camera):
    """Integrate one depth frame into the volume (in place).

    Depth pixels <= 0 are sentinels and are skipped. For every grid node
    that projects into the image with valid depth, the along-ray signed
    distance (measured depth minus node camera-depth) is clamped to the
    truncation band; nodes more than one truncation behind the surface
    are left untouched. Returns the volume.
    """
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if depth_map.shape != (camera.height, camera.width):
        raise ValueError(
            f"depth map shape {depth_map.shape} does not match camera "
            f"{(camera.height, camera.width)}"
        )

    points = volume.node_positions()
    cam = camera.world_to_camera(points)
    z = cam[:, 2]
    ok = z > 1e-9

    u = np.zeros_like(z)
    v = np.zeros_like(z)
    np.divide(cam[:, 0], z, out=u, where=ok)
    np.divide(cam[:, 1], z, out=v, where=ok)
    cols = np.round(camera.fx * u + camera.cx - 0.5).astype(np.int64)
    rows = np.round(camera.fy * v + camera.cy - 0.5).astype(np.int64)
    ok &= (cols >= 0) & (cols < camera.width) & (rows >= 0) & (rows < camera.height)

    measured = np.zeros_like(z)
    measured[ok] = depth_map[rows[ok], cols[ok]]
    ok &= measured > 0

    sdf = measured - z
    ok &= sdf >= -volume.truncation  # no far-behind carving

    if not np.any(ok):
        volume.skipped_frames += 1
        return volume

    tsdf = np.clip(sdf[ok] / volume.truncation, -1.0, 1.0)
    flat_values = volume.values.reshape(-1)
    flat_weights = volume.weights.reshape(-1)
    idx = np.nonzero(ok)[0]
    w = flat_weights[idx]
    flat_values[idx] = (flat_values[idx] * w + tsdf) / (w + 1.0)
    flat_weights[idx] = w + 1.0
    return volume


def extract_mesh(volume, isolevel=0.0):
    """Extract the zero level set as a triangle mesh (marching cubes).

    Vertices are linearly interpolated along cell edges and welded by
    edge identity so the result is watertight wherever the field is.
    Only cells whose eight corners all carry positive fusion weight are
    processed. An empty field yields an empty mesh.
    """
    values = volume.values
    weights = volume.weights
    nx, ny, nz = volume.dims

    observed = weights > 0
    cell_ok = observed[:-1, :-1, :-1]
    for dx, dy, dz in CORNER_OFFSETS[1:]:
        cell_ok = cell_ok & observed[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz]

    inside = values < isolevel
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for bit, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        case |= inside[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz] << bit

    active = cell_ok & (case != 0) & (case != 255)
    cells = np.argwhere(active)
    if len(cells) == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    vertices = []
    vertex_of_edge = {}
    triangles = []

    snap = 1e-9  # crossings this close to a node weld onto the node itself

    def edge_vertex(cx, cy, cz, edge):
        ca, cb = EDGE_CORNERS[edge]
        oa, ob = CORNER_OFFSETS[ca], CORNER_OFFSETS[cb]
        na = (cx + oa[0], cy + oa[1], cz + oa[2])
        nb = (cx + ob[0], cy + ob[1], cz + ob[2])
        va = values[na]
        vb = values[nb]
        t = (isolevel - va) / (vb - va)
        if t <= snap:
            key, t = na, 0.0
        elif t >= 1.0 - snap:
            key, t = nb, 1.0
        else:
            key = (na, nb) if na < nb else (nb, na)
        cached = vertex_of_edge.get(key)
        if cached is not None:
            return cached
        pos = volume.origin + volume.voxel_size * (
            np.array(na, dtype=np.float64)
            + t * (np.array(nb, dtype=np.float64) - np.array(na, dtype=np.float64))
        )
        index = len(vertices)
        vertices.append(pos)
        vertex_of_edge[key] = index
        return index

    for cx, cy, cz in cells:
        tri_edges = TRI_TABLE[case[cx, cy, cz]]
        for k in range(0, len(tri_edges), 3):
            ia = edge_vertex(cx, cy, cz, tri_edges[k])
            ib = edge_vertex(cx, cy, cz, tri_edges[k + 1])
            ic = edge_vertex(cx, cy, cz, tri_edges[k + 2])
            if ia != ib and ib != ic and ic != ia:
                # table order yields inward normals; swap for outward
                triangles.append((ia, ic, ib))

    mesh = TriangleMesh(np.array(vertices), np.array(triangles, dtype=np.int64))
    return mesh.without_degenerate_triangles()


def save_volume(volume, path):
    """Write the grid as raw float32 (values then weights) plus a JSON sidecar."""
    path = Path(path)
    raw = np.concatenate([
        volume.values.astype("<f4").ravel(),
        volume.weights.astype("<f4").ravel(),
    ])
    path.with_suffix(".raw").write_bytes(raw.tobytes())
    sidecar = {
        "origin": [float(x) for x in volume.origin],
        "voxel_size": volume.voxel_size,
        "dims": list(volume.dims),
        "truncation": volume.truncation,
        "channels": ["tsdf", "weight"],
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def load_volume(path):
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    volume = TsdfVolume(sidecar["origin"], sidecar["voxel_size"],
                        sidecar["dims"], sidecar["truncation"])
    raw = np.frombuffer(path.with_suffix(".raw").read_bytes(), dtype="<f4")
    n = int(np.prod(volume.dims))
    if raw.size != 2 * n:
        raise ValueError(f"raw grid has {raw.size} floats, expected {2 * n}")
    volume.values = raw[:n].astype(np.float64).reshape(volume.dims)
    volume.weights = raw[n:].astype(np.float64).reshape(volume.dims)
    return volume
