"""Image buffers and quality/efficiency metrics (PSNR, block SSIM, call counts)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImageBuffer",
    "CompareReport",
    "CSV_HEADER",
    "psnr",
    "ssim",
    "luminance",
    "compare_report",
    "format_float",
]

CSV_HEADER = "scene,mode,n,delta_t,psnr_db,ssim,color_calls,density_calls,wall_ms"
LUMA = np.array([0.2126, 0.7152, 0.0722])


class ImageBuffer:
    """H x W x 3 float64 image with channels in [0, 1]."""

    def __init__(self, data):
        data = np.array(data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite values")
        # absorb rounding just outside [0, 1]
        self.data = np.clip(data, 0.0, 1.0)

    @classmethod
    def filled(cls, width: int, height: int, rgb) -> "ImageBuffer":
        return cls(np.broadcast_to(np.asarray(rgb, dtype=np.float64), (height, width, 3)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def to_bytes(self) -> np.ndarray:
        """8-bit quantisation ``round(255 * v)``, no gamma."""
        return np.rint(self.data * 255.0).astype(np.uint8)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _pixels(img) -> np.ndarray:
    return img.data if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)


def _check_pair(a, b):
    a, b = _pixels(a), _pixels(b)
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; ``inf`` for identical inputs."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def luminance(img) -> np.ndarray:
    return _pixels(img) @ LUMA


def ssim(a, b, window: int = 8, c1: float = 0.01**2, c2: float = 0.03**2) -> float:
    """Mean SSIM over non-overlapping ``window`` x ``window`` blocks of luminance.

    Partial blocks at the right/bottom edges are ignored.
    """
    a, b = _check_pair(a, b)
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"images must be at least {window}x{window}")
    la, lb = luminance(a), luminance(b)
    h = (la.shape[0] // window) * window
    w = (la.shape[1] // window) * window

    def blocks(img):
        return img[:h, :w].reshape(h // window, window, w // window, window).swapaxes(1, 2).reshape(
            -1, window * window
        )

    xa, xb = blocks(la), blocks(lb)
    mu_a, mu_b = xa.mean(axis=1), xb.mean(axis=1)
    var_a = xa.var(axis=1)
    var_b = xb.var(axis=1)
    cov = ((xa - mu_a[:, None]) * (xb - mu_b[:, None])).mean(axis=1)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def format_float(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


@dataclass
class CompareReport:
    scene: str
    mode: str
    n: int
    delta_t: float | None
    psnr_db: float
    ssim: float
    color_calls: int
    density_calls: int
    wall_ms: float
    ref_color_calls: int
    ref_wall_ms: float

    @property
    def color_call_ratio(self) -> float:
        return self.color_calls / self.ref_color_calls if self.ref_color_calls else math.nan

    @property
    def wall_ratio(self) -> float:
        return self.wall_ms / self.ref_wall_ms if self.ref_wall_ms else math.nan

    def csv_row(self) -> str:
        dt = "" if self.delta_t is None else format_float(self.delta_t)
        fields = [
            self.scene,
            self.mode,
            str(self.n),
            dt,
            format_float(self.psnr_db),
            format_float(self.ssim),
            str(self.color_calls),
            str(self.density_calls),
            f"{self.wall_ms:.3f}",
        ]
        return ",".join(fields)


def compare_report(ref, test, stats_ref, stats_test, scene: str = "scene", mode: str = "gl",
                   n: int = 0, delta_t: float | None = None) -> CompareReport:
    """Quality of ``test`` against ``ref`` plus their call counts and timings."""
    a, b = _check_pair(ref, test)
    return CompareReport(
        scene=scene,
        mode=mode,
        n=n,
        delta_t=delta_t,
        psnr_db=psnr(a, b),
        ssim=ssim(a, b) if min(a.shape[:2]) >= 8 else math.nan,
        color_calls=stats_test.color_calls,
        density_calls=stats_test.density_calls,
        wall_ms=stats_test.wall_ms,
        ref_color_calls=stats_ref.color_calls,
        ref_wall_ms=stats_ref.wall_ms,
    )
