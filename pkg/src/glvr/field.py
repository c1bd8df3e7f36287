"""Scene fields: volume density sigma(p) >= 0 and color c(p, d) in [0, 1]^3.

Three backends share the :class:`Field` interface:

* :class:`AnalyticScene` -- spheres, boxes and gaussian blobs with closed-form
  line integrals, used as oracles.
* :class:`VoxelField` -- trilinear density/color grid, optionally with a
  :class:`ColorNet` producing the color.
* :class:`ColorNet` -- a small ReLU/sigmoid MLP standing in for a NeRF color head.

Every density and color evaluation is counted per point.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

__all__ = [
    "FieldFormatError",
    "CallCounter",
    "Field",
    "Sphere",
    "Box",
    "Blob",
    "AnalyticScene",
    "VoxelGrid",
    "ColorNet",
    "VoxelField",
    "trilinear",
    "transmittance_oracle",
    "positional_encoding",
]

GRID_MAGIC = b"GLVX"
NET_MAGIC = b"GLNN"
FORMAT_VERSION = 1
DEFAULT_BANDS = 4
# gaussian blobs are truncated where the density has fallen to exp(-16) of the peak
BLOB_CUTOFF = 4.0


class FieldFormatError(ValueError):
    """Malformed grid/network file or inconsistent field parameters."""


class CallCounter:
    """Thread-safe density/color evaluation counter."""

    def __init__(self):
        self._lock = threading.Lock()
        self.density = 0
        self.color = 0

    def add(self, density: int = 0, color: int = 0) -> None:
        with self._lock:
            self.density += int(density)
            self.color += int(color)

    def reset(self) -> None:
        with self._lock:
            self.density = 0
            self.color = 0

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.density, self.color

    # locks cannot be copied or pickled; copies start with a fresh one
    def __getstate__(self):
        return {"density": self.density, "color": self.color}

    def __setstate__(self, state):
        self._lock = threading.Lock()
        self.density = state["density"]
        self.color = state["color"]


def _as_points(p) -> tuple[np.ndarray, bool]:
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    return p.reshape(-1, 3), single


class Field:
    """Base class; subclasses implement ``_density``, ``_color`` and ``bbox``."""

    def __init__(self):
        self.counter = CallCounter()

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def density_calls(self) -> int:
        return self.counter.density

    @property
    def color_calls(self) -> int:
        return self.counter.color

    def reset_counters(self) -> None:
        self.counter.reset()

    def density_at(self, p):
        """sigma at one point ``(3,)`` or a batch ``(M, 3)``; one count per point."""
        pts, single = _as_points(p)
        self.counter.add(density=len(pts))
        sigma = self._density(pts)
        sigma = np.where(np.isnan(sigma), 0.0, np.maximum(sigma, 0.0))
        return float(sigma[0]) if single else sigma

    def color_at(self, p, d):
        """RGB in [0, 1] at points ``p`` seen along unit directions ``d``."""
        pts, single = _as_points(p)
        dirs = np.broadcast_to(np.asarray(d, dtype=np.float64).reshape(-1, 3), pts.shape)
        self.counter.add(color=len(pts))
        rgb = np.clip(self._color(pts, dirs), 0.0, 1.0)
        return rgb[0] if single else rgb

    def _density(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _color(self, pts: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# analytic primitives


def _check_color(color) -> np.ndarray:
    color = np.asarray(color, dtype=np.float64)
    if color.shape != (3,) or not np.all(np.isfinite(color)):
        raise FieldFormatError(f"color must be 3 finite numbers, got {color!r}")
    if np.any(color < 0) or np.any(color > 1):
        raise FieldFormatError("color channels must lie in [0, 1]")
    return color


def _check_vec(v, name) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise FieldFormatError(f"{name} must be 3 finite numbers")
    return v


@dataclass(frozen=True, eq=False)
class _Primitive:
    sigma: float
    color: np.ndarray
    tint: str = "constant"

    def _validate_common(self):
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise FieldFormatError(f"sigma must be finite and >= 0, got {self.sigma!r}")
        object.__setattr__(self, "color", _check_color(self.color))
        if self.tint not in ("constant", "view"):
            raise FieldFormatError(f"tint must be 'constant' or 'view', got {self.tint!r}")

    def rgb(self, pts, dirs):
        if self.tint == "constant":
            return np.broadcast_to(self.color, pts.shape)
        offset = pts - self.center
        norm = np.linalg.norm(offset, axis=1, keepdims=True)
        normal = np.divide(offset, norm, out=np.zeros_like(offset), where=norm > 0)
        facing = np.maximum(0.0, -np.sum(dirs * normal, axis=1, keepdims=True))
        return self.color * facing


@dataclass(frozen=True, eq=False)
class Sphere(_Primitive):
    center: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    radius: float = 1.0

    def __post_init__(self):
        self._validate_common()
        object.__setattr__(self, "center", _check_vec(self.center, "center"))
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise FieldFormatError("radius must be > 0")

    def density(self, pts):
        inside = np.sum((pts - self.center) ** 2, axis=1) <= self.radius**2
        return np.where(inside, self.sigma, 0.0)

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def segment(self, o, d):
        oc = o - self.center
        b = float(np.dot(oc, d))
        c = float(np.dot(oc, oc)) - self.radius**2
        disc = b * b - c
        if disc <= 0:
            return None
        root = math.sqrt(disc)
        return -b - root, -b + root


@dataclass(frozen=True, eq=False)
class Box(_Primitive):
    lo: np.ndarray = dc_field(default_factory=lambda: -np.ones(3))
    hi: np.ndarray = dc_field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self._validate_common()
        object.__setattr__(self, "lo", _check_vec(self.lo, "min"))
        object.__setattr__(self, "hi", _check_vec(self.hi, "max"))
        if np.any(self.lo > self.hi):
            raise FieldFormatError("box min must be <= max componentwise")

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def density(self, pts):
        inside = np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
        return np.where(inside, self.sigma, 0.0)

    def bounds(self):
        return self.lo, self.hi

    def segment(self, o, d):
        from .scene import slab_interval

        hit = slab_interval(o, d, self.lo, self.hi)
        return hit


@dataclass(frozen=True, eq=False)
class Blob(_Primitive):
    """sigma(p) = peak * exp(-|p - center|^2 / scale^2); ``sigma`` is the peak."""

    center: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        self._validate_common()
        object.__setattr__(self, "center", _check_vec(self.center, "center"))
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise FieldFormatError("scale must be > 0")

    def density(self, pts):
        r2 = np.sum((pts - self.center) ** 2, axis=1) / self.scale**2
        return np.where(r2 <= BLOB_CUTOFF**2, self.sigma * np.exp(-r2), 0.0)

    def bounds(self):
        reach = BLOB_CUTOFF * self.scale
        return self.center - reach, self.center + reach

    segment = None


class AnalyticScene(Field):
    """Union of primitives; overlapping densities add and colors mix by density."""

    def __init__(self, primitives):
        super().__init__()
        self.primitives = tuple(primitives)
        if not self.primitives:
            raise FieldFormatError("analytic scene needs at least one primitive")
        lows, highs = zip(*(prim.bounds() for prim in self.primitives))
        self._bbox = (np.min(lows, axis=0), np.max(highs, axis=0))

    @property
    def bbox(self):
        return self._bbox

    @property
    def has_closed_form(self) -> bool:
        return all(prim.segment is not None for prim in self.primitives)

    def _density(self, pts):
        total = np.zeros(len(pts))
        for prim in self.primitives:
            total += prim.density(pts)
        return total

    def _color(self, pts, dirs):
        num = np.zeros((len(pts), 3))
        den = np.zeros(len(pts))
        for prim in self.primitives:
            sigma = prim.density(pts)
            num += sigma[:, None] * prim.rgb(pts, dirs)
            den += sigma
        return np.divide(num, den[:, None], out=np.zeros_like(num), where=den[:, None] > 0)


def transmittance_oracle(scene: AnalyticScene, origin, direction, t, t_start=0.0):
    """``exp(-int_{t_start}^{t} sigma)`` along ``origin + s * direction``.

    Returns ``(value, exact)``. Scenes made only of constant-density spheres and
    boxes are integrated in closed form (segment length times sigma). Scenes
    containing blobs fall back to composite Simpson with 8192 sub-intervals and
    report ``exact=False``. Does not touch the call counters.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if t <= t_start:
        return 1.0, True
    if scene.has_closed_form:
        depth = 0.0
        for prim in scene.primitives:
            seg = prim.segment(o, d)
            if seg is None:
                continue
            a, b = max(seg[0], t_start), min(seg[1], t)
            if b > a:
                depth += prim.sigma * (b - a)
        return math.exp(-depth), True
    from scipy.integrate import simpson

    s = np.linspace(t_start, t, 8193)
    sigma = scene._density(o + s[:, None] * d)
    depth = float(simpson(sigma, x=s))
    return math.exp(-depth), False


# ---------------------------------------------------------------------------
# voxel grid


def trilinear(values: np.ndarray, lo, hi, p) -> np.ndarray:
    """Interpolate vertex ``values`` of shape ``(Nx, Ny, Nz[, C])`` at points ``p``.

    Vertices sit at ``linspace(lo, hi, N)`` per axis. Points are clamped into
    the box; callers decide what outside queries mean.
    """
    values = np.asarray(values)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    pts, single = _as_points(p)
    res = np.array(values.shape[:3])
    scaled = (pts - lo) / (hi - lo) * (res - 1)
    scaled = np.clip(scaled, 0.0, res - 1)
    base = np.minimum(np.floor(scaled).astype(np.intp), np.maximum(res - 2, 0))
    frac = scaled - base
    i0, j0, k0 = base.T
    i1 = np.minimum(i0 + 1, res[0] - 1)
    j1 = np.minimum(j0 + 1, res[1] - 1)
    k1 = np.minimum(k0 + 1, res[2] - 1)
    fx, fy, fz = frac.T
    if values.ndim == 4:
        fx, fy, fz = fx[:, None], fy[:, None], fz[:, None]
    c00 = values[i0, j0, k0] * (1 - fx) + values[i1, j0, k0] * fx
    c10 = values[i0, j1, k0] * (1 - fx) + values[i1, j1, k0] * fx
    c01 = values[i0, j0, k1] * (1 - fx) + values[i1, j0, k1] * fx
    c11 = values[i0, j1, k1] * (1 - fx) + values[i1, j1, k1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    out = c0 * (1 - fz) + c1 * fz
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    lo: np.ndarray
    hi: np.ndarray
    density: np.ndarray  # (Nx, Ny, Nz)
    color: np.ndarray  # (Nx, Ny, Nz, 3)

    def __post_init__(self):
        lo = _check_vec(self.lo, "aabb min")
        hi = _check_vec(self.hi, "aabb max")
        if np.any(hi <= lo):
            raise FieldFormatError("grid AABB must have positive extent on every axis")
        density = np.asarray(self.density, dtype=np.float64)
        color = np.asarray(self.color, dtype=np.float64)
        if density.ndim != 3 or min(density.shape) < 2:
            raise FieldFormatError("density grid must be 3-D with >= 2 vertices per axis")
        if color.shape != density.shape + (3,):
            raise FieldFormatError(
                f"color grid shape {color.shape} does not match density {density.shape}"
            )
        if np.any(~np.isfinite(density)) or np.any(density < 0):
            raise FieldFormatError("densities must be finite and >= 0")
        for name, value in (("lo", lo), ("hi", hi), ("density", density), ("color", color)):
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def resolution(self) -> tuple[int, int, int]:
        return tuple(int(v) for v in self.density.shape)

    def to_bytes(self) -> bytes:
        nx, ny, nz = self.resolution
        head = GRID_MAGIC + struct.pack("<4I", FORMAT_VERSION, nx, ny, nz)
        head += struct.pack("<6d", *self.lo, *self.hi)
        # file order is x fastest
        dens = np.ascontiguousarray(self.density.transpose(2, 1, 0)).astype("<f4")
        cols = np.ascontiguousarray(self.color.transpose(2, 1, 0, 3)).astype("<f4")
        return head + dens.tobytes() + cols.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> "VoxelGrid":
        header = 4 + 16 + 48
        if len(data) < header or data[:4] != GRID_MAGIC:
            raise FieldFormatError(f"{source}: not a GLVX voxel grid (bad magic)")
        version, nx, ny, nz = struct.unpack_from("<4I", data, 4)
        if version != FORMAT_VERSION:
            raise FieldFormatError(f"{source}: unsupported GLVX version {version}")
        box = struct.unpack_from("<6d", data, 20)
        count = nx * ny * nz
        expected = header + 4 * count + 12 * count
        if len(data) != expected:
            raise FieldFormatError(
                f"{source}: header says {nx}x{ny}x{nz} ({expected} bytes) but file has {len(data)}"
            )
        dens = np.frombuffer(data, "<f4", count, header).reshape(nz, ny, nx).transpose(2, 1, 0)
        cols = np.frombuffer(data, "<f4", 3 * count, header + 4 * count)
        cols = cols.reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3)
        return cls(np.array(box[:3]), np.array(box[3:]), dens, cols)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "VoxelGrid":
        return cls.from_bytes(Path(path).read_bytes(), str(path))


# ---------------------------------------------------------------------------
# color network


def positional_encoding(x: np.ndarray, bands: int) -> np.ndarray:
    """``[x, sin(2^k pi x), cos(2^k pi x)]`` for ``k < bands``."""
    if bands == 0:
        return x
    freqs = (2.0 ** np.arange(bands)) * np.pi
    angles = x[:, None, :] * freqs[None, :, None]  # (M, bands, D)
    enc = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    return np.concatenate([x, enc.reshape(len(x), -1)], axis=1)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class ColorNet:
    """Feed-forward color head: ReLU hidden layers, sigmoid RGB output.

    Input is ``(position, direction)``; if the first layer takes ``6 + 12 L``
    inputs, both vectors are passed through an ``L``-band positional encoding.
    Layer weights have shape ``(out, in)``.
    """

    def __init__(self, layers):
        self.layers = []
        for w, b in layers:
            w = np.array(w, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise FieldFormatError("each layer needs an (out, in) matrix and an out-length bias")
            w.flags.writeable = False
            b.flags.writeable = False
            self.layers.append((w, b))
        if not self.layers:
            raise FieldFormatError("network has no layers")
        for k in range(1, len(self.layers)):
            if self.layers[k][0].shape[1] != self.layers[k - 1][0].shape[0]:
                raise FieldFormatError(
                    f"layer {k} expects {self.layers[k][0].shape[1]} inputs "
                    f"but layer {k - 1} produces {self.layers[k - 1][0].shape[0]}"
                )
        if self.layers[-1][0].shape[0] != 3:
            raise FieldFormatError("final layer must output 3 channels")
        n_in = self.layers[0][0].shape[1]
        if n_in < 6 or (n_in - 6) % 12:
            raise FieldFormatError(f"input width {n_in} is not 6 + 12 * bands")
        self.bands = (n_in - 6) // 12

    @classmethod
    def random(cls, seed: int = 0, hidden=(64, 64), bands: int = DEFAULT_BANDS) -> "ColorNet":
        rng = np.random.default_rng(seed)
        sizes = [6 + 12 * bands, *hidden, 3]
        layers = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_out, n_in))
            b = rng.normal(0.0, 0.1, size=n_out)
            layers.append((w, b))
        return cls(layers)

    def forward(self, p, d) -> np.ndarray:
        pts, single = _as_points(p)
        dirs = np.broadcast_to(np.asarray(d, dtype=np.float64).reshape(-1, 3), pts.shape)
        h = positional_encoding(np.concatenate([pts, dirs], axis=1), self.bands)
        for w, b in self.layers[:-1]:
            h = np.maximum(h @ w.T + b, 0.0)
        w, b = self.layers[-1]
        out = _sigmoid(h @ w.T + b)
        return out[0] if single else out

    __call__ = forward

    def to_bytes(self) -> bytes:
        out = [NET_MAGIC, struct.pack("<2I", FORMAT_VERSION, len(self.layers))]
        for w, b in self.layers:
            out.append(struct.pack("<2I", *w.shape))
            out.append(w.astype("<f4").tobytes())
            out.append(b.astype("<f4").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> "ColorNet":
        if data[:4] != NET_MAGIC:
            raise FieldFormatError(f"{source}: not a GLNN network (bad magic)")
        try:
            version, count = struct.unpack_from("<2I", data, 4)
            if version != FORMAT_VERSION:
                raise FieldFormatError(f"{source}: unsupported GLNN version {version}")
            offset = 12
            layers = []
            for _ in range(count):
                rows, cols = struct.unpack_from("<2I", data, offset)
                offset += 8
                w = np.frombuffer(data, "<f4", rows * cols, offset).reshape(rows, cols)
                offset += 4 * rows * cols
                b = np.frombuffer(data, "<f4", rows, offset)
                offset += 4 * rows
                layers.append((w, b))
        except (struct.error, ValueError) as exc:
            if isinstance(exc, FieldFormatError):
                raise
            raise FieldFormatError(f"{source}: truncated GLNN file") from exc
        if offset != len(data):
            raise FieldFormatError(f"{source}: {len(data) - offset} trailing bytes")
        return cls(layers)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ColorNet":
        return cls.from_bytes(Path(path).read_bytes(), str(path))


class VoxelField(Field):
    """Density from a voxel grid; color from the grid or from a :class:`ColorNet`.

    Queries outside the grid AABB are vacuum: sigma = 0, color black.
    """

    def __init__(self, grid: VoxelGrid, net: ColorNet | None = None):
        super().__init__()
        self.grid = grid
        self.net = net

    @property
    def bbox(self):
        return self.grid.lo, self.grid.hi

    def _inside(self, pts):
        return np.all((pts >= self.grid.lo) & (pts <= self.grid.hi), axis=1)

    def _density(self, pts):
        inside = self._inside(pts)
        out = np.zeros(len(pts))
        if np.any(inside):
            out[inside] = trilinear(self.grid.density, self.grid.lo, self.grid.hi, pts[inside])
        return out

    def _color(self, pts, dirs):
        inside = self._inside(pts)
        out = np.zeros((len(pts), 3))
        if np.any(inside):
            if self.net is not None:
                out[inside] = self.net.forward(pts[inside], dirs[inside])
            else:
                out[inside] = trilinear(self.grid.color, self.grid.lo, self.grid.hi, pts[inside])
        return out
