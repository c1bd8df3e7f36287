"""Tools for checking that the color seen along a ray is polynomial-like in optical depth.

:func:`color_profile` marches a ray and records color against optical depth,
:class:`ChebyshevPolyRegressor` / :func:`polyfit` fit it by least squares, and
:func:`bernstein` gives the constructive polynomial approximant used to argue
that any continuous profile can be approximated uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import chebyshev as C
from scipy.special import gammaln, xlog1py, xlogy
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .field import Field
from .render import DEFAULT_STEPS
from .scene import Ray, ray_aabb_batch

__all__ = [
    "FitError",
    "ColorProfile",
    "color_profile",
    "ChebyshevPolyRegressor",
    "polyfit",
    "bernstein",
    "SUPPORT_THRESHOLD",
]

SUPPORT_THRESHOLD = 1e-4
_MAX_CONDITION = 1e12


class FitError(ValueError):
    """Least-squares system is rank deficient or too ill-conditioned."""

    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


@dataclass
class ColorProfile:
    """Samples at march-step starts: ray parameter, optical depth, color channel, T*sigma."""

    t: np.ndarray
    x: np.ndarray
    color: np.ndarray
    weight: np.ndarray

    def support(self, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
        """Mask of samples whose T*sigma exceeds ``threshold`` times its maximum."""
        peak = self.weight.max(initial=0.0)
        if peak <= 0:
            return np.zeros(self.weight.shape, dtype=bool)
        return self.weight > threshold * peak

    def restricted(self, threshold: float = SUPPORT_THRESHOLD) -> tuple[np.ndarray, np.ndarray]:
        mask = self.support(threshold)
        return self.x[mask], self.color[mask]


def color_profile(ray: Ray, field: Field, delta_t: float | None = None, channel: int = 0) -> ColorProfile:
    """March ``ray`` through ``field`` and record ``(x(t), c(r(t)))``.

    ``delta_t=None`` uses ``(t_max - t_min) / 1024``. Raises ``ValueError`` when
    the ray misses the field's bounding box.
    """
    if ray.t_min is not None and ray.t_max is not None:
        t_min, t_max = ray.t_min, ray.t_max
    else:
        lo, hi = field.bbox
        t0, t1, hit = ray_aabb_batch(ray.o, ray.d, lo, hi)
        if not hit:
            raise ValueError("ray misses the scene")
        t_min, t_max = float(t0), float(t1)
    span = t_max - t_min
    dt = span / DEFAULT_STEPS if delta_t is None else float(delta_t)
    steps = max(1, int(np.ceil(span / dt * (1.0 - 1e-12)))) if span > 0 else 0
    t = t_min + dt * np.arange(steps)
    seg = np.minimum(dt, t_max - t)
    pts = ray.at(t)
    sigma = field.density_at(pts)
    rgb = field.color_at(pts, ray.d)
    x = np.concatenate([[0.0], np.cumsum(sigma * seg)[:-1]]) if steps else np.zeros(0)
    weight = np.exp(-x) * sigma
    return ColorProfile(t, x, rgb[:, channel] if steps else np.zeros(0), weight)


class ChebyshevPolyRegressor(RegressorMixin, BaseEstimator):
    """Least-squares polynomial of fixed ``degree`` in one variable.

    The design matrix uses Chebyshev polynomials on the data's own interval and
    the normal equations are solved directly; ``coef_`` holds the equivalent
    power-series coefficients (lowest degree first).
    """

    def __init__(self, degree: int = 7):
        self.degree = degree

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("expected a single feature column")
        x = X[:, 0]
        deg = int(self.degree)
        if deg < 0:
            raise ValueError("degree must be >= 0")
        if len(x) < deg + 1:
            raise FitError(f"need at least {deg + 1} samples for degree {deg}, got {len(x)}")
        lo, hi = float(x.min()), float(x.max())
        if hi == lo and deg > 0:
            raise FitError("all samples share one abscissa; system is rank deficient")
        self.domain_ = (lo, hi)
        basis = self._basis(x, deg)
        gram = basis.T @ basis
        cond = float(np.linalg.cond(gram))
        self.condition_ = cond
        if not np.isfinite(cond) or cond > _MAX_CONDITION:
            raise FitError(f"normal equations ill-conditioned (cond={cond:.3g})", cond)
        self.cheb_coef_ = np.linalg.solve(gram, basis.T @ y)
        series = C.Chebyshev(self.cheb_coef_, domain=[lo, hi] if hi > lo else [lo - 1, lo + 1])
        self.coef_ = series.convert(kind=Polynomial).coef
        resid = y - basis @ self.cheb_coef_
        rms_y = np.sqrt(np.mean(y**2))
        rms_r = np.sqrt(np.mean(resid**2))
        if rms_y == 0:
            self.relative_error_ = 0.0 if rms_r == 0 else np.inf
        else:
            self.relative_error_ = float(rms_r / rms_y)
        return self

    def _basis(self, x, deg):
        lo, hi = self.domain_
        u = np.zeros_like(x) if hi == lo else (2.0 * x - (lo + hi)) / (hi - lo)
        return C.chebvander(u, deg)

    def predict(self, X):
        check_is_fitted(self, "cheb_coef_")
        X = check_array(X, dtype=np.float64)
        return self._basis(X[:, 0], len(self.cheb_coef_) - 1) @ self.cheb_coef_


def polyfit(x, y, degree: int):
    """Fit ``y ~ p(x)``; returns ``(power-series coefficients, relative RMS error)``."""
    model = ChebyshevPolyRegressor(degree).fit(np.asarray(x, dtype=np.float64).reshape(-1, 1), y)
    return model.coef_, model.relative_error_


def bernstein(f, n: int, x):
    """Degree-``n`` Bernstein approximant ``sum_k f(k/n) C(n,k) x^k (1-x)^(n-k)``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    k = np.arange(n + 1)
    samples = np.array([f(kk / n) if n else f(0.0) for kk in k], dtype=np.float64)
    xs = x.reshape(-1, 1)
    # basis in log space to stay finite for large n
    log_basis = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + xlogy(k, xs) + xlog1py(n - k, -xs)
    out = np.exp(log_basis) @ samples
    return out.reshape(x.shape) if x.ndim else float(out[0])
