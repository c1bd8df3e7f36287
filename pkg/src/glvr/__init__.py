"""Volume rendering with Gauss-Laguerre quadrature and a dense Riemann baseline."""

from .field import AnalyticScene, Blob, Box, ColorNet, Sphere, VoxelField, VoxelGrid
from .metrics import ImageBuffer, psnr, ssim
from .quadrature import QuadratureRule, integrate, laguerre_rule, legendre_rule
from .render import GaussLaguerreRenderer, RenderConfig, RiemannRenderer, render_image
from .scene import Camera, Ray, load_scene

__version__ = "0.1.0"

__all__ = [
    "AnalyticScene",
    "Blob",
    "Box",
    "Camera",
    "ColorNet",
    "GaussLaguerreRenderer",
    "ImageBuffer",
    "QuadratureRule",
    "Ray",
    "RenderConfig",
    "RiemannRenderer",
    "Sphere",
    "VoxelField",
    "VoxelGrid",
    "integrate",
    "laguerre_rule",
    "legendre_rule",
    "load_scene",
    "psnr",
    "render_image",
    "ssim",
]
