"""Pinhole cameras, rays, ray/AABB slab intersection and scene-file loading.

Scene files are UTF-8 JSON::

    {
      "field": {"kind": "analytic", "primitives": [...]}
             | {"kind": "voxel", "grid": "scene.glvx", "color_net": "color.glnn"},
      "cameras": [{"pose": [12 numbers, row-major 3x4 camera-to-world],
                   "focal": 64.0, "cx": 32.0, "cy": 32.0,
                   "width": 64, "height": 64}],
      "render": {"mode": "gl", "n_samples": 8, "delta_t": null, "n_steps": 1024},
      "background": [1.0, 1.0, 1.0]
    }

Primitive entries are ``{"shape": "sphere", "center": [...], "radius": r}``,
``{"shape": "box", "min": [...], "max": [...]}`` or
``{"shape": "blob", "center": [...], "scale": s}``, each with ``"sigma"``
(peak density for blobs), ``"color"`` and optional ``"tint": "constant" | "view"``.
Relative file paths resolve against the scene file's directory.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import AnalyticScene, Blob, Box, ColorNet, Field, FieldFormatError, Sphere, VoxelField, VoxelGrid

__all__ = [
    "SceneError",
    "Camera",
    "Ray",
    "Scene",
    "orbit_pose",
    "generate_ray",
    "slab_interval",
    "ray_aabb",
    "ray_aabb_batch",
    "load_scene",
    "parse_scene",
]


class SceneError(ValueError):
    """Scene file could not be parsed or failed validation."""


def orbit_pose(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """3x4 camera-to-world pose at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        # looking along ``up``: any perpendicular will do
        right = np.cross(forward, (0.0, 1.0, 0.0))
    right /= np.linalg.norm(right)
    true_up = np.cross(right, forward)
    rot = np.stack([right, true_up, -forward], axis=1)
    return np.concatenate([rot, eye[:, None]], axis=1)


@dataclass(frozen=True, eq=False)
class Camera:
    """Camera-to-world ``pose`` (3x4), focal length in pixels, principal point.

    Right-handed; the camera looks down its local -z axis with +y up.
    """

    pose: np.ndarray
    focal: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        pose = np.array(self.pose, dtype=np.float64).reshape(3, 4)
        rot = pose[:, :3]
        if not np.all(np.isfinite(pose)):
            raise ValueError("pose must be finite")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6):
            raise ValueError("pose rotation columns must be orthonormal")
        if not (math.isfinite(self.focal) and self.focal > 0):
            raise ValueError("focal must be > 0")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("width and height must be >= 1")
        pose.flags.writeable = False
        object.__setattr__(self, "pose", pose)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def looking_at(cls, eye, target, focal, width, height, up=(0.0, 0.0, 1.0)) -> "Camera":
        return cls(orbit_pose(eye, target, up), focal, width / 2.0, height / 2.0, width, height)

    @property
    def origin(self) -> np.ndarray:
        return self.pose[:, 3]

    @property
    def axis(self) -> np.ndarray:
        """World-space optical axis."""
        return -self.pose[:, 2]

    def pixel_directions(self, px, py) -> np.ndarray:
        """Unit world directions through pixel centers ``(px + 0.5, py + 0.5)``."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        local = np.stack(
            [(px + 0.5 - self.cx) / self.focal, -(py + 0.5 - self.cy) / self.focal, -np.ones_like(px)],
            axis=-1,
        )
        world = local @ self.pose[:, :3].T
        return world / np.linalg.norm(world, axis=-1, keepdims=True)

    def all_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origins and directions for every pixel, row-major, shape ``(H*W, 3)``."""
        py, px = np.mgrid[0 : self.height, 0 : self.width]
        dirs = self.pixel_directions(px.ravel(), py.ravel())
        origins = np.broadcast_to(self.origin, dirs.shape).copy()
        return origins, dirs


@dataclass(frozen=True, eq=False)
class Ray:
    o: np.ndarray
    d: np.ndarray
    t_min: float | None = None
    t_max: float | None = None

    def __post_init__(self):
        o = np.asarray(self.o, dtype=np.float64)
        d = np.asarray(self.d, dtype=np.float64)
        norm = np.linalg.norm(d)
        if norm == 0 or not np.all(np.isfinite(d)):
            raise ValueError("ray direction must be finite and non-zero")
        object.__setattr__(self, "o", o)
        object.__setattr__(self, "d", d / norm)

    def at(self, t):
        return self.o + np.multiply.outer(t, self.d)

    def with_bounds(self, t_min: float, t_max: float) -> "Ray":
        return Ray(self.o, self.d, float(t_min), float(t_max))


def generate_ray(camera: Camera, px: int, py: int) -> Ray:
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px}, {py}) outside {camera.width}x{camera.height} image")
    return Ray(camera.origin.copy(), camera.pixel_directions(px, py))


def ray_aabb_batch(origins, dirs, lo, hi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised slab test. Returns ``(t_min, t_max, hit)`` with ``t_min >= 0``."""
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    parallel = dirs == 0.0
    safe = np.where(parallel, 1.0, dirs)
    with np.errstate(over="ignore"):
        t0 = (lo - origins) / safe
        t1 = (hi - origins) / safe
    near = np.minimum(t0, t1)
    far = np.maximum(t0, t1)
    # a parallel ray either lies inside the slab (no constraint) or misses it
    inside_slab = (origins >= lo) & (origins <= hi)
    near = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), near)
    far = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), far)
    t_min = np.maximum(near.max(axis=-1), 0.0)
    t_max = far.min(axis=-1)
    return t_min, t_max, t_min <= t_max


def slab_interval(o, d, lo, hi):
    """Unclamped entry/exit parameters of the line ``o + t d`` through a box, or None."""
    o = np.asarray(o, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    near, far = -np.inf, np.inf
    for axis in range(3):
        if d[axis] == 0.0:
            if not lo[axis] <= o[axis] <= hi[axis]:
                return None
            continue
        a = (lo[axis] - o[axis]) / d[axis]
        b = (hi[axis] - o[axis]) / d[axis]
        near = max(near, min(a, b))
        far = min(far, max(a, b))
    if near > far:
        return None
    return float(near), float(far)


def ray_aabb(ray: Ray, lo, hi):
    """``(t_min, t_max)`` of the ray inside the box with ``t_min`` clamped to 0, or None."""
    t_min, t_max, hit = ray_aabb_batch(ray.o, ray.d, lo, hi)
    if not hit:
        return None
    return float(t_min), float(t_max)


# ---------------------------------------------------------------------------
# scene files


@dataclass(frozen=True, eq=False)
class Scene:
    field: Field
    cameras: tuple
    render: dict
    background: np.ndarray
    name: str = "scene"


_RENDER_KEYS = {"mode", "n_samples", "delta_t", "n_steps", "legacy_offset"}


def _vec(value, where, length=3):
    if not isinstance(value, list) or len(value) != length:
        raise SceneError(f"{where}: expected a list of {length} numbers")
    try:
        out = np.array([float(v) for v in value])
    except (TypeError, ValueError):
        raise SceneError(f"{where}: expected numbers") from None
    if not np.all(np.isfinite(out)):
        raise SceneError(f"{where}: values must be finite")
    return out


def _number(obj, key, where):
    if key not in obj:
        raise SceneError(f"{where}.{key}: missing")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"{where}.{key}: expected a number")
    return float(value)


def _primitive(entry, where):
    if not isinstance(entry, dict):
        raise SceneError(f"{where}: expected an object")
    shape = entry.get("shape")
    sigma = _number(entry, "sigma", where)
    if sigma < 0:
        raise SceneError(f"{where}.sigma: must be >= 0, got {sigma}")
    color = _vec(entry.get("color"), f"{where}.color")
    tint = entry.get("tint", "constant")
    try:
        if shape == "sphere":
            return Sphere(sigma, color, tint, _vec(entry.get("center"), f"{where}.center"),
                          _number(entry, "radius", where))
        if shape == "box":
            return Box(sigma, color, tint, _vec(entry.get("min"), f"{where}.min"),
                       _vec(entry.get("max"), f"{where}.max"))
        if shape == "blob":
            return Blob(sigma, color, tint, _vec(entry.get("center"), f"{where}.center"),
                        _number(entry, "scale", where))
    except FieldFormatError as exc:
        raise SceneError(f"{where}: {exc}") from None
    raise SceneError(f"{where}.shape: unknown shape {shape!r}")


def _field(spec, base: Path) -> Field:
    if not isinstance(spec, dict):
        raise SceneError("field: expected an object")
    kind = spec.get("kind")
    if kind == "analytic":
        prims = spec.get("primitives")
        if not isinstance(prims, list) or not prims:
            raise SceneError("field.primitives: expected a non-empty list")
        return AnalyticScene([_primitive(p, f"field.primitives[{i}]") for i, p in enumerate(prims)])
    if kind == "voxel":
        if "grid" not in spec:
            raise SceneError("field.grid: missing")
        grid_path = base / spec["grid"]
        try:
            grid = VoxelGrid.load(grid_path)
        except FileNotFoundError:
            raise SceneError(f"field.grid: voxel file not found: {grid_path}") from None
        except FieldFormatError as exc:
            raise SceneError(f"field.grid: {exc}") from None
        net = None
        if spec.get("color_net") is not None:
            net_path = base / spec["color_net"]
            try:
                net = ColorNet.load(net_path)
            except FileNotFoundError:
                raise SceneError(f"field.color_net: network file not found: {net_path}") from None
            except FieldFormatError as exc:
                raise SceneError(f"field.color_net: {exc}") from None
        return VoxelField(grid, net)
    raise SceneError(f"field.kind: unknown field backend {kind!r}")


def _camera(entry, where):
    if not isinstance(entry, dict):
        raise SceneError(f"{where}: expected an object")
    pose = _vec(entry.get("pose"), f"{where}.pose", 12)
    try:
        return Camera(
            pose,
            _number(entry, "focal", where),
            float(entry.get("cx", entry.get("width", 0) / 2.0)),
            float(entry.get("cy", entry.get("height", 0) / 2.0)),
            int(_number(entry, "width", where)),
            int(_number(entry, "height", where)),
        )
    except ValueError as exc:
        if isinstance(exc, SceneError):
            raise
        raise SceneError(f"{where}: {exc}") from None


def parse_scene(doc: dict, base: Path | str = ".", name: str = "scene") -> Scene:
    """Validate an already-decoded scene document."""
    if not isinstance(doc, dict):
        raise SceneError("top level: expected an object")
    unknown = set(doc) - {"field", "cameras", "render", "background", "name"}
    if unknown:
        raise SceneError(f"top level: unknown keys {sorted(unknown)}")
    field = _field(doc.get("field"), Path(base))
    cams = doc.get("cameras")
    if not isinstance(cams, list) or not cams:
        raise SceneError("cameras: expected a non-empty list")
    cameras = tuple(_camera(c, f"cameras[{i}]") for i, c in enumerate(cams))
    render = doc.get("render", {})
    if not isinstance(render, dict):
        raise SceneError("render: expected an object")
    bad = set(render) - _RENDER_KEYS
    if bad:
        raise SceneError(f"render: unknown keys {sorted(bad)}")
    background = _vec(doc.get("background", [0.0, 0.0, 0.0]), "background")
    if np.any(background < 0) or np.any(background > 1):
        raise SceneError("background: channels must lie in [0, 1]")
    return Scene(field, cameras, dict(render), background, str(doc.get("name", name)))


def load_scene(path) -> Scene:
    """Read and validate a JSON scene file; raises :class:`SceneError`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {path}") from None
    except OSError as exc:
        raise SceneError(f"cannot read scene file {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return parse_scene(doc, path.parent, path.stem)
