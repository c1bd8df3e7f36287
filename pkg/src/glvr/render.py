"""Volume rendering along rays: dense Riemann-sum baseline and Gauss-Laguerre.

Both estimators composite leftover transmittance onto the background color.

The Gauss-Laguerre renderer marches each ray with a fixed step ``delta_t``,
accumulating optical depth ``x(t) = int sigma`` under a piecewise-constant
density model. Whenever ``x`` passes the next Laguerre node it places a color
sample at the crossing (linear interpolation inside the step) and attaches
that node's weight; weights of nodes never reached go to the background.
Only the selected points are shaded, so a ray costs at most ``n`` color calls.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .field import Field
from .metrics import ImageBuffer, psnr
from .quadrature import QuadratureRule, laguerre_rule
from .scene import Camera, Ray, ray_aabb_batch

__all__ = [
    "ConfigError",
    "RenderConfig",
    "RenderStats",
    "SelectedPoint",
    "GaussLaguerreRenderer",
    "RiemannRenderer",
    "select_gl_points",
    "render_pixel_gl",
    "render_pixel_vanilla",
    "render_rays",
    "render_image",
    "make_renderer",
]

DEFAULT_STEPS = 1024
# pixels per work unit; fixed so output never depends on the worker count
BLOCK_PIXELS = 1024
# cap on points shaded at once by the dense renderer
_VANILLA_BATCH_POINTS = 1 << 19
# march steps evaluated per batch; a ray that finishes mid-batch wastes at most MARCH_CHUNK - 1 density calls
MARCH_CHUNK = 32


class ConfigError(ValueError):
    """Invalid render configuration; the message names the offending field."""


@dataclass(frozen=True)
class RenderConfig:
    """``delta_t`` is an absolute march step; when None, each ray uses span / n_steps."""

    mode: str = "gl"
    n_samples: int = 8
    delta_t: float | None = None
    n_steps: int = DEFAULT_STEPS
    background: tuple = (0.0, 0.0, 0.0)
    legacy_offset: bool = False

    def __post_init__(self):
        if self.mode not in ("gl", "vanilla"):
            raise ConfigError(f"mode: expected 'gl' or 'vanilla', got {self.mode!r}")
        if isinstance(self.n_samples, bool) or int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ConfigError(f"n: n_samples must be a positive integer, got {self.n_samples!r}")
        if self.mode == "gl" and self.n_samples > 64:
            raise ConfigError(f"n: Gauss-Laguerre node count must be <= 64, got {self.n_samples}")
        if self.delta_t is not None and not (math.isfinite(self.delta_t) and self.delta_t > 0):
            raise ConfigError(f"dt: delta_t must be a positive number, got {self.delta_t!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError(f"n_steps: must be a positive integer, got {self.n_steps!r}")
        bg = tuple(float(c) for c in self.background)
        if len(bg) != 3 or any(not 0.0 <= c <= 1.0 for c in bg):
            raise ConfigError("background: expected 3 channels in [0, 1]")
        object.__setattr__(self, "background", bg)
        object.__setattr__(self, "n_samples", int(self.n_samples))


@dataclass
class RenderStats:
    color_calls: int = 0
    density_calls: int = 0
    wall_time: float = 0.0
    rays_total: int = 0
    rays_missed: int = 0

    def __add__(self, other: "RenderStats") -> "RenderStats":
        return RenderStats(
            self.color_calls + other.color_calls,
            self.density_calls + other.density_calls,
            self.wall_time + other.wall_time,
            self.rays_total + other.rays_total,
            self.rays_missed + other.rays_missed,
        )

    @property
    def wall_ms(self) -> float:
        return 1000.0 * self.wall_time


@dataclass(frozen=True)
class SelectedPoint:
    t: float
    node_index: int
    weight: float


# ---------------------------------------------------------------------------
# batched cores


def _step_sizes(t_min, t_max, delta_t, n_steps):
    span = t_max - t_min
    if delta_t is None:
        dt = span / n_steps
    else:
        dt = np.full_like(span, float(delta_t))
    with np.errstate(divide="ignore", invalid="ignore"):
        count = np.where(dt > 0, np.ceil(span / dt * (1.0 - 1e-12)), 0.0)
    return dt, count.astype(np.int64)


@dataclass
class _GLSelection:
    """Per-ray selection result for a batch of rays.

    ``t`` and ``selected`` have shape (R, n); ``reached`` counts nodes hit.
    ``depth_trace`` optionally records, per marching batch, the active rays,
    step positions, optical depth at step starts, densities and validity mask.
    """

    t: np.ndarray
    selected: np.ndarray
    reached: np.ndarray
    density_calls: int
    depth_trace: list | None = None


def _select_gl(field: Field, origins, dirs, t_min, t_max, nodes, delta_t=None,
               n_steps=DEFAULT_STEPS, legacy_offset=False, trace=False) -> _GLSelection:
    n_rays = len(origins)
    n = len(nodes)
    dt, steps = _step_sizes(t_min, t_max, delta_t, n_steps)
    x = np.zeros(n_rays)
    reached = np.zeros(n_rays, dtype=np.int64)
    t_sel = np.zeros((n_rays, n))
    chosen = np.zeros((n_rays, n), dtype=bool)
    density_calls = 0
    depth_trace = [] if trace else None
    offsets = np.arange(MARCH_CHUNK)
    k = 0
    active = np.nonzero(steps > 0)[0]
    while active.size:
        # density for the next MARCH_CHUNK steps of every active ray in one batch
        kk = k + offsets
        dt_a = dt[active][:, None]
        t = t_min[active][:, None] + kk * dt_a
        valid = kk < steps[active][:, None]
        seg = np.where(valid, np.minimum(dt_a, t_max[active][:, None] - t), 0.0)
        rr, cc = np.nonzero(valid)
        sigma = np.zeros(t.shape)
        sigma[rr, cc] = field.density_at(origins[active][rr] + t[rr, cc][:, None] * dirs[active][rr])
        density_calls += rr.size
        # cumsum adds left to right, so depths match a step-by-step march bit for bit
        xs = np.cumsum(np.concatenate([x[active][:, None], sigma * seg], axis=1), axis=1)
        if trace:
            depth_trace.append((active.copy(), t, xs[:, :-1].copy(), sigma, valid))
        count = np.minimum(np.searchsorted(nodes, xs[:, 1:], side="right"), n)
        first = reached[active]
        new = count[:, -1] - first
        # several nodes can be crossed inside one step when sigma * dt is large
        for j_off in range(int(new.max(initial=0))):
            hit = np.nonzero(new > j_off)[0]
            rows = active[hit]
            j = first[hit] + j_off
            step = np.sum(count[hit] <= j[:, None], axis=1)
            x0 = xs[hit, step]
            x1 = xs[hit, step + 1]
            frac = (nodes[j] - x0) / (x1 - x0)
            if legacy_offset:
                t_sel[rows, j] = t[hit, step] + frac * dt[rows] - dt[rows]
            else:
                t_sel[rows, j] = t[hit, step] + frac * seg[hit, step]
            chosen[rows, j] = True
        reached[active] = count[:, -1]
        x[active] = xs[:, -1]
        k += MARCH_CHUNK
        keep = (k < steps[active]) & (reached[active] < n)
        active = active[keep]
    return _GLSelection(t_sel, chosen, reached, density_calls, depth_trace)


def _suffix_weights(weights: np.ndarray) -> np.ndarray:
    """``out[k] = sum(weights[k:])``; ``out[n] = 0``."""
    return np.array([float(np.sum(weights[k:])) for k in range(len(weights))] + [0.0])


def _render_gl(field, origins, dirs, t_min, t_max, rule, background, delta_t=None,
               n_steps=DEFAULT_STEPS, legacy_offset=False):
    sel = _select_gl(field, origins, dirs, t_min, t_max, rule.nodes, delta_t, n_steps, legacy_offset)
    rows, cols = np.nonzero(sel.selected)
    colors = np.zeros(sel.t.shape + (3,))
    if rows.size:
        pts = origins[rows] + sel.t[rows, cols][:, None] * dirs[rows]
        colors[rows, cols] = field.color_at(pts, dirs[rows])
    weights = np.where(sel.selected, rule.weights, 0.0)
    bg_weight = _suffix_weights(rule.weights)[sel.reached]
    out = np.einsum("rn,rnc->rc", weights, colors) + bg_weight[:, None] * np.asarray(background)
    return out, sel.density_calls, int(rows.size)


def _render_vanilla(field, origins, dirs, t_min, t_max, n, background):
    n_rays = len(origins)
    out = np.empty((n_rays, 3))
    bg = np.asarray(background, dtype=np.float64)
    chunk = max(1, _VANILLA_BATCH_POINTS // n)
    for start in range(0, n_rays, chunk):
        sl = slice(start, start + chunk)
        o, d = origins[sl], dirs[sl]
        delta = (t_max[sl] - t_min[sl]) / n
        # cell midpoints of n equal intervals
        t = t_min[sl, None] + (np.arange(n) + 0.5) * delta[:, None]
        pts = o[:, None, :] + t[..., None] * d[:, None, :]
        dir_rep = np.broadcast_to(d[:, None, :], pts.shape)
        sigma = field.density_at(pts.reshape(-1, 3)).reshape(t.shape)
        color = field.color_at(pts.reshape(-1, 3), dir_rep.reshape(-1, 3)).reshape(t.shape + (3,))
        tau = sigma * delta[:, None]
        depth = np.cumsum(tau, axis=1)
        trans = np.exp(-(depth - tau))
        w = trans * -np.expm1(-tau)
        out[sl] = np.einsum("rn,rnc->rc", w, color) + np.exp(-depth[:, -1])[:, None] * bg
    return out, n_rays * n, n_rays * n


def render_rays(field: Field, origins, dirs, config: RenderConfig, rule: QuadratureRule | None = None):
    """Render a batch of rays against the field's bounding box.

    Returns ``(colors (R, 3), RenderStats)``.
    """
    start = time.perf_counter()
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    lo, hi = field.bbox
    t_min, t_max, hit = ray_aabb_batch(origins, dirs, lo, hi)
    out = np.broadcast_to(np.asarray(config.background), origins.shape).copy()
    stats = RenderStats(rays_total=len(origins), rays_missed=int(np.sum(~hit)))
    idx = np.nonzero(hit)[0]
    if idx.size:
        if config.mode == "gl":
            rule = rule if rule is not None else laguerre_rule(config.n_samples)
            colors, dcalls, ccalls = _render_gl(
                field, origins[idx], dirs[idx], t_min[idx], t_max[idx], rule,
                config.background, config.delta_t, config.n_steps, config.legacy_offset,
            )
        else:
            colors, dcalls, ccalls = _render_vanilla(
                field, origins[idx], dirs[idx], t_min[idx], t_max[idx], config.n_samples, config.background
            )
        out[idx] = colors
        stats.density_calls = dcalls
        stats.color_calls = ccalls
    stats.wall_time = time.perf_counter() - start
    return out, stats


# ---------------------------------------------------------------------------
# single-ray API


def _ray_bounds(ray: Ray, field: Field):
    if ray.t_min is not None and ray.t_max is not None:
        return ray.t_min, ray.t_max, ray.t_min <= ray.t_max
    t_min, t_max, hit = ray_aabb_batch(ray.o, ray.d, *field.bbox)
    return float(t_min), float(t_max), bool(hit)


def select_gl_points(ray: Ray, field: Field, rule: QuadratureRule, delta_t: float | None = None,
                     legacy_offset: bool = False):
    """Choose color-sample positions along one ray.

    Returns ``(points, bg_weight)`` where ``points`` is a list of
    :class:`SelectedPoint` in node order and ``bg_weight`` is the summed weight
    of nodes the ray's optical depth never reaches. ``delta_t=None`` uses
    ``(t_max - t_min) / 1024``.
    """
    if rule.kind != "laguerre":
        raise ValueError("point selection needs a Laguerre rule")
    t_min, t_max, hit = _ray_bounds(ray, field)
    if not hit:
        return [], float(_suffix_weights(rule.weights)[0])
    sel = _select_gl(field, ray.o[None], ray.d[None], np.array([t_min]), np.array([t_max]),
                     rule.nodes, delta_t, DEFAULT_STEPS, legacy_offset)
    reached = int(sel.reached[0])
    points = [SelectedPoint(float(sel.t[0, j]), j, float(rule.weights[j])) for j in range(reached)]
    return points, float(_suffix_weights(rule.weights)[reached])


def render_pixel_gl(ray: Ray, field: Field, rule: QuadratureRule, config: RenderConfig) -> np.ndarray:
    t_min, t_max, hit = _ray_bounds(ray, field)
    if not hit:
        return np.asarray(config.background, dtype=np.float64)
    out, _, _ = _render_gl(field, ray.o[None], ray.d[None], np.array([t_min]), np.array([t_max]),
                           rule, config.background, config.delta_t, config.n_steps, config.legacy_offset)
    return out[0]


def render_pixel_vanilla(ray: Ray, field: Field, config: RenderConfig) -> np.ndarray:
    t_min, t_max, hit = _ray_bounds(ray, field)
    if not hit:
        return np.asarray(config.background, dtype=np.float64)
    out, _, _ = _render_vanilla(field, ray.o[None], ray.d[None], np.array([t_min]), np.array([t_max]),
                                config.n_samples, config.background)
    return out[0]


def render_image(field: Field, camera: Camera, config: RenderConfig, workers: int = 1):
    """Render every pixel of ``camera``; returns ``(ImageBuffer, RenderStats)``.

    Pixels are split into fixed blocks of ``BLOCK_PIXELS`` regardless of
    ``workers``, so the image is bit-identical for any worker count.
    """
    start = time.perf_counter()
    origins, dirs = camera.all_rays()
    rule = laguerre_rule(config.n_samples) if config.mode == "gl" else None
    blocks = [slice(s, s + BLOCK_PIXELS) for s in range(0, len(origins), BLOCK_PIXELS)]

    def work(sl):
        return render_rays(field, origins[sl], dirs[sl], config, rule)

    if workers <= 1:
        results = [work(sl) for sl in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, blocks))
    pixels = np.concatenate([r[0] for r in results])
    stats = RenderStats()
    for _, s in results:
        stats = stats + s
    stats.wall_time = time.perf_counter() - start
    image = ImageBuffer(pixels.reshape(camera.height, camera.width, 3))
    return image, stats


# ---------------------------------------------------------------------------
# estimator API


def _check_rays(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_min_samples=1)
    if X.shape[1] != 6:
        raise ValueError(f"expected rays as (n_rays, 6) [origin, direction], got {X.shape[1]} columns")
    if np.any(np.linalg.norm(X[:, 3:], axis=1) == 0):
        raise ValueError("ray directions must be non-zero")
    return X


class _RayRenderer(BaseEstimator):
    """Shared plumbing: rays in, RGB out.

    ``X`` is an ``(n_rays, 6)`` array of ``[origin, direction]``; ``predict``
    returns ``(n_rays, 3)`` colors and leaves the call counts in ``stats_``.
    """

    _mode = ""

    def _config(self) -> RenderConfig:
        raise NotImplementedError

    def fit(self, X=None, y=None):
        if self.field is None:
            raise ValueError("field must be set before fitting")
        self.config_ = self._config()
        if X is not None:
            _check_rays(X)
        self.n_features_in_ = 6
        return self

    def predict(self, X):
        check_is_fitted(self, "config_")
        X = _check_rays(X)
        colors, self.stats_ = render_rays(self.field, X[:, :3], X[:, 3:], self.config_, getattr(self, "rule_", None))
        return colors

    def score(self, X, y):
        """PSNR in dB of the rendered colors against reference colors ``y``."""
        pred = self.predict(X)
        y = check_array(y, dtype=np.float64)
        return psnr(pred, y)

    def render(self, camera: Camera, workers: int = 1):
        check_is_fitted(self, "config_")
        image, self.stats_ = render_image(self.field, camera, self.config_, workers)
        return image


class GaussLaguerreRenderer(_RayRenderer):
    """Volume renderer that shades only ``n_samples`` Gauss-Laguerre points per ray.

    Parameters
    ----------
    field : Field
        Scene field providing density and color.
    n_samples : int
        Number of Laguerre nodes (at most this many color calls per ray).
    delta_t : float or None
        Absolute march step for density; None means span / n_steps per ray.
    n_steps : int
        Steps per ray when ``delta_t`` is None.
    background : tuple of 3 floats
    legacy_offset : bool
        Compatibility mode: place samples one step behind the crossing segment
        start. Off by default.
    """

    def __init__(self, field=None, n_samples=8, delta_t=None, n_steps=DEFAULT_STEPS,
                 background=(0.0, 0.0, 0.0), legacy_offset=False):
        self.field = field
        self.n_samples = n_samples
        self.delta_t = delta_t
        self.n_steps = n_steps
        self.background = background
        self.legacy_offset = legacy_offset

    def _config(self):
        return RenderConfig("gl", self.n_samples, self.delta_t, self.n_steps, self.background, self.legacy_offset)

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.rule_ = laguerre_rule(self.n_samples)
        self.nodes_ = self.rule_.nodes
        self.weights_ = self.rule_.weights
        return self

    def select_points(self, X):
        """Per-ray ``(t, selected, bg_weight)`` arrays; ``t`` and ``selected`` are (R, n)."""
        check_is_fitted(self, "rule_")
        X = _check_rays(X)
        o, d = X[:, :3], X[:, 3:] / np.linalg.norm(X[:, 3:], axis=1, keepdims=True)
        t_min, t_max, hit = ray_aabb_batch(o, d, *self.field.bbox)
        t_min = np.where(hit, t_min, 0.0)
        t_max = np.where(hit, t_max, 0.0)
        sel = _select_gl(self.field, o, d, t_min, t_max, self.rule_.nodes, self.delta_t,
                         self.n_steps, self.legacy_offset)
        return sel.t, sel.selected, _suffix_weights(self.rule_.weights)[sel.reached]


class RiemannRenderer(_RayRenderer):
    """Classic NeRF-style estimator with ``n_samples`` uniform samples per ray."""

    def __init__(self, field=None, n_samples=128, background=(0.0, 0.0, 0.0)):
        self.field = field
        self.n_samples = n_samples
        self.background = background

    def _config(self):
        return RenderConfig("vanilla", self.n_samples, None, DEFAULT_STEPS, self.background)


def make_renderer(field: Field, config: RenderConfig) -> _RayRenderer:
    if config.mode == "gl":
        return GaussLaguerreRenderer(field, config.n_samples, config.delta_t, config.n_steps,
                                     config.background, config.legacy_offset)
    return RiemannRenderer(field, config.n_samples, config.background)
