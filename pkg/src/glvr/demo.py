"""Built-in demo scenes, also used by the test-suite.

``python -m glvr.demo OUTDIR`` writes them as scene files (plus the voxel
grid and color network binaries).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .field import ColorNet, VoxelGrid
from .scene import orbit_pose

__all__ = ["scene_documents", "voxel_assets", "write_demo_scenes"]


def _camera(eye, size=64, focal=None):
    return {
        "pose": orbit_pose(eye).ravel().tolist(),
        "focal": float(focal if focal is not None else 1.1 * size),
        "cx": size / 2.0,
        "cy": size / 2.0,
        "width": size,
        "height": size,
    }


def _cameras(size=64):
    return [_camera((0.4, -3.6, 1.2), size), _camera((3.0, 1.5, 1.8), size), _camera((1.0, -0.6, 3.5), size)]


def scene_documents(size: int = 64) -> dict[str, dict]:
    """Analytic demo scenes keyed by name."""
    white = [1.0, 1.0, 1.0]
    return {
        "slab": {
            "field": {"kind": "analytic", "primitives": [
                {"shape": "box", "min": [-1, -1, -0.25], "max": [1, 1, 0.25], "sigma": 40.0,
                 "color": [0.8, 0.2, 0.1]},
            ]},
            "cameras": _cameras(size),
            "render": {"mode": "gl", "n_samples": 8},
            "background": white,
        },
        "spheres": {
            "field": {"kind": "analytic", "primitives": [
                {"shape": "sphere", "center": [-0.45, 0, 0], "radius": 0.7, "sigma": 30.0,
                 "color": [0.9, 0.25, 0.2], "tint": "view"},
                {"shape": "box", "min": [0.1, -0.5, -0.5], "max": [1.0, 0.5, 0.4], "sigma": 15.0,
                 "color": [0.2, 0.7, 0.3]},
                {"shape": "sphere", "center": [0.3, -0.2, 0.7], "radius": 0.35, "sigma": 60.0,
                 "color": [0.2, 0.3, 0.9]},
            ]},
            "cameras": _cameras(size),
            "render": {"mode": "gl", "n_samples": 8},
            "background": white,
        },
        "blob": {
            "field": {"kind": "analytic", "primitives": [
                {"shape": "blob", "center": [0, 0, 0], "scale": 0.5, "sigma": 40.0,
                 "color": [0.95, 0.6, 0.3], "tint": "view"},
                {"shape": "blob", "center": [0.6, 0.3, 0.2], "scale": 0.3, "sigma": 60.0,
                 "color": [0.3, 0.5, 0.9], "tint": "view"},
            ]},
            "cameras": _cameras(size),
            "render": {"mode": "gl", "n_samples": 8},
            "background": [0.0, 0.0, 0.0],
        },
        "empty": {
            "field": {"kind": "analytic", "primitives": [
                {"shape": "sphere", "center": [0, 0, 0], "radius": 1.0, "sigma": 0.0,
                 "color": [1, 0, 0]},
            ]},
            "cameras": _cameras(size),
            "render": {"mode": "gl", "n_samples": 8},
            "background": [0.2, 0.4, 0.6],
        },
    }


def voxel_assets(resolution: int = 32, seed: int = 0) -> tuple[VoxelGrid, ColorNet]:
    """A soft-edged torus-and-ball density grid with a random color network."""
    axis = np.linspace(-1.0, 1.0, resolution)
    x, y, z = np.meshgrid(axis, axis, axis, indexing="ij")
    ring = (np.sqrt(x**2 + y**2) - 0.6) ** 2 + z**2
    ball = (x - 0.2) ** 2 + (y + 0.1) ** 2 + (z - 0.3) ** 2
    density = 60.0 / (1.0 + np.exp((np.sqrt(ring) - 0.2) / 0.03))
    density += 60.0 / (1.0 + np.exp((np.sqrt(ball) - 0.3) / 0.03))
    color = np.stack([0.5 + 0.5 * x, 0.5 + 0.5 * y, 0.5 + 0.5 * z], axis=-1)
    grid = VoxelGrid(np.full(3, -1.0), np.full(3, 1.0), density, color)
    return grid, ColorNet.random(seed)


def write_demo_scenes(outdir, size: int = 64) -> dict[str, Path]:
    """Write every demo scene into ``outdir``; returns ``{name: path}``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, doc in scene_documents(size).items():
        path = outdir / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        paths[name] = path
    grid, net = voxel_assets()
    grid.save(outdir / "torus.glvx")
    net.save(outdir / "color.glnn")
    voxel_doc = {
        "field": {"kind": "voxel", "grid": "torus.glvx", "color_net": "color.glnn"},
        "cameras": _cameras(size),
        "render": {"mode": "gl", "n_samples": 8},
        "background": [1.0, 1.0, 1.0],
    }
    path = outdir / "voxel.json"
    path.write_text(json.dumps(voxel_doc, indent=2) + "\n", encoding="utf-8")
    paths["voxel"] = path
    return paths


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "scenes"
    for name, p in write_demo_scenes(target).items():
        print(f"{name}: {p}")
