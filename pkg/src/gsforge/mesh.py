"""Triangle meshes: transforms, height queries, and STL/OBJ files."""

import struct
from pathlib import Path

import numpy as np

DEGENERATE_AREA = 1e-12


class TriangleMesh:
    """Indexed triangle mesh.

    ``vertices`` is (V, 3) float64, ``triangles`` (T, 3) int64. Vertex
    normals are optional and lazily computed.
    """

    def __init__(self, vertices, triangles, vertex_normals=None):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        self.vertex_normals = (np.asarray(vertex_normals, dtype=np.float64)
                               if vertex_normals is not None else None)
        if len(self.triangles) and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle indices out of range")
        if len(self.vertices) and not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinates")
        self._height_index = None

    def __len__(self):
        return len(self.triangles)

    def triangle_corners(self):
        """(T, 3, 3) corner positions."""
        return self.vertices[self.triangles]

    def face_normals(self, normalize=True):
        corners = self.triangle_corners()
        n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        if normalize:
            lengths = np.linalg.norm(n, axis=1, keepdims=True)
            lengths[lengths == 0] = 1.0
            n = n / lengths
        return n

    def face_areas(self):
        corners = self.triangle_corners()
        n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)

    def without_degenerate_triangles(self, min_area=DEGENERATE_AREA):
        keep = self.face_areas() > min_area
        return TriangleMesh(self.vertices, self.triangles[keep],
                            vertex_normals=self.vertex_normals)

    def compute_vertex_normals(self):
        """Area-weighted vertex normals; stored and returned."""
        normals = np.zeros_like(self.vertices)
        face_n = self.face_normals(normalize=False)  # area-weighted
        for k in range(3):
            np.add.at(normals, self.triangles[:, k], face_n)
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        lengths[lengths == 0] = 1.0
        self.vertex_normals = normals / lengths
        return self.vertex_normals

    def edge_counts(self):
        """Map undirected vertex-pair edge -> number of incident triangles."""
        counts = {}
        for a, b, c in self.triangles:
            for e in ((a, b), (b, c), (c, a)):
                key = (min(e), max(e))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def is_watertight(self):
        counts = self.edge_counts()
        return len(counts) > 0 and all(c == 2 for c in counts.values())


def transform_mesh(mesh, transform):
    """Apply a similarity transform to the vertices; topology unchanged."""
    vertices = transform.apply(mesh.vertices)
    normals = None
    if mesh.vertex_normals is not None:
        normals = mesh.vertex_normals @ transform.rotation.T
    return TriangleMesh(vertices, mesh.triangles.copy(), vertex_normals=normals)


class HeightIndex:
    """Build-once 2D bin grid for vertical ray queries against a mesh."""

    def __init__(self, mesh, cell_size=None):
        self.mesh = mesh
        corners = mesh.triangle_corners()
        self.corners = corners
        if len(corners) == 0:
            self.cells = {}
            return
        self.tri_xy_min = corners[:, :, :2].min(axis=1)
        self.tri_xy_max = corners[:, :, :2].max(axis=1)
        self.lo = self.tri_xy_min.min(axis=0)
        hi = self.tri_xy_max.max(axis=0)
        if cell_size is None:
            extent = max(hi[0] - self.lo[0], hi[1] - self.lo[1], 1e-9)
            cell_size = max(extent / 64.0, 1e-9)
        self.cell_size = float(cell_size)
        self.cells = {}
        lo_idx = np.floor((self.tri_xy_min - self.lo) / self.cell_size).astype(np.int64)
        hi_idx = np.floor((self.tri_xy_max - self.lo) / self.cell_size).astype(np.int64)
        for t in range(len(corners)):
            for ix in range(lo_idx[t, 0], hi_idx[t, 0] + 1):
                for iy in range(lo_idx[t, 1], hi_idx[t, 1] + 1):
                    self.cells.setdefault((ix, iy), []).append(t)

    def query(self, x, y):
        """Highest mesh z at (x, y) under a downward vertical ray, or None."""
        if not self.cells:
            return None
        ix = int(np.floor((x - self.lo[0]) / self.cell_size))
        iy = int(np.floor((y - self.lo[1]) / self.cell_size))
        candidates = self.cells.get((ix, iy))
        if not candidates:
            return None
        best = None
        for t in candidates:
            a, b, c = self.corners[t]
            z = _triangle_height(a, b, c, x, y)
            if z is not None and (best is None or z > best):
                best = z
        return best


def _triangle_height(a, b, c, x, y, eps=1e-12):
    """Barycentric z of (x, y) inside triangle abc projected to xy, or None."""
    d = np.array([x - a[0], y - a[1]])
    e1 = np.array([b[0] - a[0], b[1] - a[1]])
    e2 = np.array([c[0] - a[0], c[1] - a[1]])
    det = e1[0] * e2[1] - e1[1] * e2[0]
    if abs(det) < eps:
        return None
    u = (d[0] * e2[1] - d[1] * e2[0]) / det
    v = (e1[0] * d[1] - e1[1] * d[0]) / det
    if u < -eps or v < -eps or u + v > 1.0 + eps:
        return None
    return a[2] + u * (b[2] - a[2]) + v * (c[2] - a[2])


def height_query(mesh, x, y):
    """Highest intersection of the downward ray at (x, y) with the mesh.

    Builds the spatial index on first use and caches it on the mesh.
    """
    if mesh._height_index is None:
        mesh._height_index = HeightIndex(mesh)
    return mesh._height_index.query(x, y)


def save_stl(mesh, path):
    """Write binary STL (facet normals recomputed from geometry)."""
    normals = mesh.face_normals()
    corners = mesh.triangle_corners()
    with open(path, "wb") as f:
        f.write(b"\0" * 80)
        f.write(struct.pack("<I", len(mesh.triangles)))
        for n, tri in zip(normals, corners):
            f.write(struct.pack("<3f", *n))
            for v in tri:
                f.write(struct.pack("<3f", *v))
            f.write(struct.pack("<H", 0))


def load_stl(path):
    data = Path(path).read_bytes()
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) < expected:
        raise ValueError(f"stl payload truncated: {len(data)} < {expected} bytes")
    vertices = np.zeros((count * 3, 3))
    for t in range(count):
        base = 84 + t * 50 + 12
        for k in range(3):
            vertices[t * 3 + k] = struct.unpack_from("<3f", data, base + 12 * k)
    triangles = np.arange(count * 3, dtype=np.int64).reshape(count, 3)
    return TriangleMesh(vertices, triangles)


def save_obj(mesh, path):
    lines = [f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in mesh.vertices]
    lines += [f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}" for t in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path):
    vertices = []
    triangles = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):
                triangles.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                        np.array(triangles, dtype=np.int64).reshape(-1, 3))
