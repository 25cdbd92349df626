"""JSON loaders and writers for the toolkit's asset file schemas.

Cameras are stored as position + camera-to-world quaternion (w, x, y, z)
plus intrinsics; similarity transforms as rotation quaternion,
translation, and scale (a 4x4 ``matrix`` form is also accepted);
oriented boxes as center, rotation_quaternion, half_extents; regions as
named polygons with a z height and optional yaw range. Lengths are
meters, angles radians.
"""

import json
from pathlib import Path

import numpy as np

from .compose import OrientedBoundingBox, RegionSpec
from .scene import CameraModel, matrix_to_quaternion, quaternions_to_matrices
from .transforms import SimilarityTransform, decompose_homogeneous


def _read(path_or_obj):
    if isinstance(path_or_obj, (str, Path)):
        return json.loads(Path(path_or_obj).read_text())
    return path_or_obj


def camera_from_json(obj):
    """Build a CameraModel from a dict or JSON file path."""
    obj = _read(obj)
    width = int(obj["width"])
    height = int(obj["height"])
    if "fx" in obj:
        fx, fy = float(obj["fx"]), float(obj["fy"])
        cx = float(obj.get("cx", width / 2.0))
        cy = float(obj.get("cy", height / 2.0))
    elif "fov_x" in obj:
        fx = width / (2.0 * np.tan(float(obj["fov_x"]) / 2.0))
        fy = height / (2.0 * np.tan(float(obj["fov_y"]) / 2.0))
        cx, cy = width / 2.0, height / 2.0
    else:
        raise ValueError("camera JSON needs fx/fy or fov_x/fov_y")
    position = np.asarray(obj.get("position", [0.0, 0.0, 0.0]), dtype=np.float64)
    quat = np.asarray(obj.get("quaternion", [1.0, 0.0, 0.0, 0.0]), dtype=np.float64)
    quat = quat / np.linalg.norm(quat)
    r_cw = quaternions_to_matrices(quat)
    r_wc = r_cw.T
    return CameraModel(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height,
                       r_wc=r_wc, t_wc=-r_wc @ position)


def camera_to_json(camera):
    return {
        "width": camera.width,
        "height": camera.height,
        "fx": camera.fx,
        "fy": camera.fy,
        "cx": camera.cx,
        "cy": camera.cy,
        "position": [float(x) for x in camera.center],
        "quaternion": [float(x) for x in matrix_to_quaternion(camera.r_wc.T)],
    }


def transform_from_json(obj):
    obj = _read(obj)
    if "matrix" in obj:
        return decompose_homogeneous(np.asarray(obj["matrix"], dtype=np.float64))
    quat = np.asarray(obj["rotation_quaternion"], dtype=np.float64)
    quat = quat / np.linalg.norm(quat)
    return SimilarityTransform(
        rotation=quaternions_to_matrices(quat),
        translation=np.asarray(obj.get("translation", [0, 0, 0]), dtype=np.float64),
        scale=float(obj.get("scale", 1.0)),
    )


def transform_to_json(transform):
    return {
        "rotation_quaternion": [float(x) for x in matrix_to_quaternion(transform.rotation)],
        "translation": [float(x) for x in transform.translation],
        "scale": transform.scale,
    }


def obb_from_json(obj):
    obj = _read(obj)
    quat = np.asarray(obj.get("rotation_quaternion", [1, 0, 0, 0]), dtype=np.float64)
    quat = quat / np.linalg.norm(quat)
    return OrientedBoundingBox(
        center=np.asarray(obj["center"], dtype=np.float64),
        rotation=quaternions_to_matrices(quat),
        half_extents=np.asarray(obj["half_extents"], dtype=np.float64),
    )


def region_from_json(obj):
    obj = _read(obj)
    return RegionSpec(
        polygon=np.asarray(obj["polygon"], dtype=np.float64),
        z=float(obj.get("z", 0.0)),
        yaw_range=tuple(obj.get("yaw_range", (-np.pi, np.pi))),
    )


def regions_from_json(obj):
    """Load {'robot': spec, 'left': spec, 'middle': spec, 'right': spec}."""
    obj = _read(obj)
    return {name: region_from_json(spec) for name, spec in obj.items()}


def correspondences_from_json(obj):
    """Load a correspondence list into (src, dst) point arrays."""
    obj = _read(obj)
    src = np.array([pair["source"] for pair in obj], dtype=np.float64)
    dst = np.array([pair["target"] for pair in obj], dtype=np.float64)
    return src, dst


def points_from_json(obj):
    """Load a plain JSON list of [x, y, z] points."""
    return np.asarray(_read(obj), dtype=np.float64).reshape(-1, 3)
