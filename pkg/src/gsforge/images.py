"""Image and raster file I/O.

RGB images are 8-bit PNG. Float maps (depth, grayscale, normals) use a
raw little-endian float32 raster with a 16-byte header: 4-byte magic
``GSFR``, uint32 width, uint32 height, uint32 channel count.
"""

import struct
from pathlib import Path

import numpy as np
from PIL import Image

RASTER_MAGIC = b"GSFR"


def to_uint8(rgb):
    """[0, 1] float RGB to uint8 with round-half-away quantization."""
    return np.clip(np.asarray(rgb) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def save_png(rgb, path):
    """Save (H, W, 3) float [0,1] or uint8 RGB as PNG."""
    arr = np.asarray(rgb)
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_png(path):
    """Load a PNG as (H, W, 3) float RGB in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_float_raster(array, path):
    """Save an (H, W) or (H, W, C) float map as a raw float32 raster."""
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise ValueError("expected (H, W) or (H, W, C) array")
    h, w, c = arr.shape
    header = RASTER_MAGIC + struct.pack("<III", w, h, c)
    Path(path).write_bytes(header + np.ascontiguousarray(arr).tobytes())


def load_float_raster(path):
    """Load a float raster; returns (H, W) for 1 channel, else (H, W, C)."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != RASTER_MAGIC:
        raise ValueError(f"{path}: not a float raster (bad magic)")
    w, h, c = struct.unpack("<III", data[4:16])
    c = max(c, 1)
    expected = 16 + w * h * c * 4
    if len(data) < expected:
        raise ValueError(f"{path}: truncated raster ({len(data)} < {expected} bytes)")
    arr = np.frombuffer(data[16:expected], dtype="<f4").reshape(h, w, c)
    arr = arr.astype(np.float64)
    return arr[..., 0] if c == 1 else arr


save_depth_raster = save_float_raster
load_depth_raster = load_float_raster
