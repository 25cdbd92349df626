"""TCP render service: the simulator-to-renderer bridge.

Wire format, both directions: a 4-byte big-endian payload length, then
the payload: one UTF-8 JSON header line terminated by a newline, then
raw binary image data (requests carry no binary). Image payloads are
row-major; ``rgb`` is 8-bit RGB, ``depth`` and ``gray`` are float32
little-endian.

A render request header:

    {"id": 1, "type": "render",
     "camera": {"position": [x, y, z], "quaternion": [w, x, y, z],
                "width": 320, "height": 180},   # intrinsics optional
     "objects": [{"id": "red", "transform": {"rotation_quaternion": ...,
                                             "translation": ..., "scale": ...}}],
     "channels": ["rgb", "depth", "gray"]}

The base environment scene is immutable; each request composes it with
the listed objects at the given poses (objects not listed are absent),
so re-sending a pose reproduces the earlier image bit-exactly. Malformed
frames get an error response and the connection closes; semantic errors
(unknown object, bad camera) get an error response on a live connection.
"""

import json
import socket
import socketserver
import struct
import threading

import numpy as np

from .compose import merge_scenes
from .files import camera_from_json, transform_from_json
from .images import to_uint8
from .render import RenderOptions, render
from .scene import ENVIRONMENT_LABEL
from .transforms import transform_scene

MAX_FRAME_BYTES = 64 * 1024 * 1024


class FrameError(ValueError):
    """Raised on malformed wire frames."""


def send_frame(sock, header, binary=b""):
    payload = (json.dumps(header) + "\n").encode("utf-8") + binary
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def _recv_exact(sock, n):
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock):
    """Read one frame; returns (header dict, binary bytes) or None on EOF."""
    prefix = sock.recv(4)
    if not prefix:
        return None
    if len(prefix) < 4:
        prefix += _recv_exact(sock, 4 - len(prefix))
    (length,) = struct.unpack(">I", prefix)
    if length == 0 or length > MAX_FRAME_BYTES:
        raise FrameError(f"declared payload length {length} out of range")
    payload = _recv_exact(sock, length)
    newline = payload.find(b"\n")
    if newline < 0:
        raise FrameError("payload has no header line")
    try:
        header = json.loads(payload[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"bad JSON header: {exc}") from exc
    if not isinstance(header, dict):
        raise FrameError("header is not a JSON object")
    return header, payload[newline + 1:]


def encode_channels(output, channels):
    """Pack requested channels; returns (descriptors, binary blob)."""
    images = []
    blob = b""
    for channel in channels:
        if channel == "rgb":
            data = to_uint8(output.rgb).tobytes()
            dtype, depth = "u8", 3
        elif channel == "depth":
            data = output.depth.astype("<f4").tobytes()
            dtype, depth = "f32", 1
        elif channel == "gray":
            data = output.gray.astype("<f4").tobytes()
            dtype, depth = "f32", 1
        else:
            raise ValueError(f"unknown channel {channel!r}")
        h, w = output.alpha.shape
        images.append({"channel": channel, "width": w, "height": h,
                       "dtype": dtype, "channels": depth, "bytes": len(data)})
        blob += data
    return images, blob


def decode_channels(header, binary):
    """Split a response blob back into arrays keyed by channel name."""
    out = {}
    offset = 0
    for desc in header.get("images", []):
        n = desc["bytes"]
        raw = binary[offset:offset + n]
        offset += n
        h, w = desc["height"], desc["width"]
        if desc["dtype"] == "u8":
            arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, desc["channels"])
        else:
            arr = np.frombuffer(raw, dtype="<f4").reshape(h, w, desc["channels"])
            if desc["channels"] == 1:
                arr = arr[..., 0]
        out[desc["channel"]] = arr
    return out


class RenderService:
    """Holds the immutable scene assets and renders per request."""

    def __init__(self, env_scene, object_scenes=None, default_camera=None,
                 render_options=None):
        self.env_scene = (env_scene if env_scene.labels is not None
                          else env_scene.with_labels(ENVIRONMENT_LABEL))
        self.object_scenes = dict(object_scenes or {})
        self.default_camera = default_camera
        self.render_options = render_options or RenderOptions()

    def compose(self, object_poses, cache=None):
        """Merge the base scene with transformed objects.

        ``object_poses`` is a list of (object id, SimilarityTransform);
        ``cache`` (optional, per connection) avoids re-transforming an
        object whose pose has not changed.
        """
        parts = [self.env_scene]
        for obj_id, transform in object_poses:
            if obj_id not in self.object_scenes:
                raise KeyError(obj_id)
            key = (transform.rotation.tobytes(), transform.translation.tobytes(),
                   transform.scale)
            cached = cache.get(obj_id) if cache is not None else None
            if cached is not None and cached[0] == key:
                moved = cached[1]
            else:
                moved = transform_scene(self.object_scenes[obj_id],
                                        transform).with_labels(obj_id)
                if cache is not None:
                    cache[obj_id] = (key, moved)
            parts.append(moved)
        return merge_scenes(parts)

    def handle_request(self, header, cache=None):
        """Execute one render request; returns (response header, binary)."""
        req_id = header.get("id")
        if header.get("type") != "render":
            return ({"id": req_id, "status": "error", "code": "bad-request",
                     "message": f"unsupported type {header.get('type')!r}"}, b"")
        try:
            camera_spec = dict(header.get("camera") or {})
            if self.default_camera is not None:
                base = self.default_camera
                camera_spec.setdefault("width", base.width)
                camera_spec.setdefault("height", base.height)
                if "fx" not in camera_spec and "fov_x" not in camera_spec:
                    camera_spec["fx"] = base.fx
                    camera_spec["fy"] = base.fy
                    camera_spec["cx"] = base.cx
                    camera_spec["cy"] = base.cy
            camera = camera_from_json(camera_spec)
            quat = np.asarray(camera_spec.get("quaternion", [1, 0, 0, 0]),
                              dtype=np.float64)
            if abs(np.linalg.norm(quat) - 1.0) > 1e-6:
                raise ValueError("camera quaternion must be unit length")
            poses = [(obj["id"], transform_from_json(obj["transform"]))
                     for obj in header.get("objects", [])]
            channels = header.get("channels", ["rgb"])
        except KeyError as exc:
            return ({"id": req_id, "status": "error", "code": "bad-request",
                     "message": f"missing field {exc}"}, b"")
        except (TypeError, ValueError) as exc:
            return ({"id": req_id, "status": "error", "code": "bad-request",
                     "message": str(exc)}, b"")

        try:
            scene = self.compose(poses, cache=cache)
        except KeyError as exc:
            return ({"id": req_id, "status": "error", "code": "unknown-object",
                     "message": f"unknown object id {exc.args[0]!r}"}, b"")
        except ValueError as exc:
            return ({"id": req_id, "status": "error", "code": "bad-request",
                     "message": str(exc)}, b"")

        try:
            output = render(scene, camera, self.render_options)
            images, blob = encode_channels(output, channels)
        except ValueError as exc:
            return ({"id": req_id, "status": "error", "code": "bad-request",
                     "message": str(exc)}, b"")
        return ({"id": req_id, "status": "ok", "images": images}, blob)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        cache = {}
        service = self.server.render_service
        while True:
            try:
                frame = recv_frame(self.request)
            except FrameError as exc:
                try:
                    send_frame(self.request, {"id": None, "status": "error",
                                              "code": "malformed-frame",
                                              "message": str(exc)})
                except OSError:
                    pass
                return  # close connection on framing errors
            except (ConnectionError, OSError):
                return
            if frame is None:
                return
            header, _ = frame
            try:
                response, blob = service.handle_request(header, cache=cache)
            except Exception as exc:  # never let a request kill the service
                response, blob = ({"id": header.get("id"), "status": "error",
                                   "code": "internal-error",
                                   "message": str(exc)}, b"")
            try:
                send_frame(self.request, response, blob)
            except OSError:
                return


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def start_server(service, host="127.0.0.1", port=0):
    """Start the service on a background thread; returns (server, port).

    Call ``server.shutdown()`` then ``server.server_close()`` to stop.
    """
    server = _Server((host, port), _Handler)
    server.render_service = service
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[1]


def serve(service, host="127.0.0.1", port=7462):
    """Run the service in the foreground until interrupted."""
    server = _Server((host, port), _Handler)
    server.render_service = service
    try:
        server.serve_forever()
    finally:
        server.server_close()


def request_render(host, port, header, timeout=30.0):
    """One-shot client call; returns (response header, {channel: array})."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        send_frame(sock, header)
        frame = recv_frame(sock)
    if frame is None:
        raise ConnectionError("server closed the connection without replying")
    response, binary = frame
    return response, decode_channels(response, binary)
