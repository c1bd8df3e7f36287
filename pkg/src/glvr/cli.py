"""Command-line interface.

Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
3 domain error (e.g. the requested pixel's ray misses the scene).
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
from typing import Sequence

import numpy as np

from .field import FieldFormatError
from .image import save_image
from .metrics import CSV_HEADER, compare_report
from .quadrature import MAX_POINTS, laguerre_rule, legendre_rule
from .render import ConfigError, RenderConfig, render_image
from .scene import SceneError, generate_ray, load_scene
from .verify import FitError, color_profile, polyfit

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _pixel(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected px,py, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integer pixel coordinates, got {text!r}") from None


def _workers(args) -> int:
    threads = args.threads
    if threads is None:
        env = os.environ.get("GLVR_THREADS")
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise CliError(f"GLVR_THREADS must be an integer, got {env!r}") from None
    if threads < 0:
        raise CliError("threads: must be >= 0")
    return threads or (os.cpu_count() or 1)


def _load(args):
    try:
        scene = load_scene(args.scene)
    except SceneError as exc:
        raise CliError(str(exc)) from None
    if not 0 <= args.camera < len(scene.cameras):
        raise CliError(f"camera: index {args.camera} out of range (scene has {len(scene.cameras)})")
    return scene, scene.cameras[args.camera]


def _config(scene, mode, n, dt, legacy=False) -> RenderConfig:
    defaults = scene.render
    try:
        return RenderConfig(
            mode=mode or defaults.get("mode", "gl"),
            n_samples=n if n is not None else defaults.get("n_samples", 8),
            delta_t=dt if dt is not None else defaults.get("delta_t"),
            n_steps=defaults.get("n_steps", 1024),
            background=tuple(scene.background),
            legacy_offset=legacy or bool(defaults.get("legacy_offset", False)),
        )
    except ConfigError as exc:
        raise CliError(str(exc)) from None


def _write_text(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


# ---------------------------------------------------------------------------
# commands


def cmd_render(args) -> int:
    scene, camera = _load(args)
    config = _config(scene, args.mode, args.n, args.dt, args.legacy_offset)
    image, stats = render_image(scene.field, camera, config, _workers(args))
    try:
        save_image(image, args.out)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from None
    print(f"{stats.color_calls},{stats.density_calls},{stats.wall_ms:.3f}")
    return 0


def cmd_compare(args) -> int:
    scene, camera = _load(args)
    workers = _workers(args)
    base_cfg = _config(scene, "vanilla", args.baseline_n, None)
    gl_cfgs = [_config(scene, "gl", n, args.dt) for n in args.gl_n]
    ref, ref_stats = render_image(scene.field, camera, base_cfg, workers)
    rows = [CSV_HEADER]
    base = compare_report(ref, ref, ref_stats, ref_stats, scene.name, "vanilla", base_cfg.n_samples)
    rows.append(base.csv_row())
    for cfg in gl_cfgs:
        img, stats = render_image(scene.field, camera, cfg, workers)
        rep = compare_report(ref, img, ref_stats, stats, scene.name, "gl", cfg.n_samples, cfg.delta_t)
        rows.append(rep.csv_row())
    _write_text(args.out, "\n".join(rows) + "\n")
    return 0


def cmd_quad_table(args) -> int:
    if not 1 <= args.n <= MAX_POINTS:
        raise CliError(f"n: must lie in [1, {MAX_POINTS}], got {args.n}")
    rule = laguerre_rule(args.n) if args.kind == "laguerre" else legendre_rule(args.n)
    lines = []
    if args.format == "csv":
        for i, (x, w) in enumerate(rule, start=1):
            lines.append(f"{i},{x:.17g},{w:.17g}")
    else:
        lines.append(f"{'i':>3}  {'x_i':>24}  {'w_i':>24}")
        for i, (x, w) in enumerate(rule, start=1):
            lines.append(f"{i:>3}  {x:>24.17g}  {w:>24.17g}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_verify_color(args) -> int:
    scene, camera = _load(args)
    px, py = args.pixel
    try:
        ray = generate_ray(camera, px, py)
    except ValueError as exc:
        raise CliError(f"pixel: {exc}") from None
    try:
        profile = color_profile(ray, scene.field, args.dt, args.channel)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from None
    x, c = profile.restricted()
    if x.size == 0:
        raise CliError("ray passes through empty space only; no color profile to fit", EXIT_DOMAIN)
    try:
        coef, rel = polyfit(x, c, args.degree)
    except FitError as exc:
        raise CliError(f"fit failed: {exc}", EXIT_DOMAIN) from None
    fit = np.polynomial.Polynomial(coef)(x)
    rows = ["x,c,fit,residual"]
    rows += [f"{a!r},{b!r},{f!r},{b - f!r}" for a, b, f in zip(x.tolist(), c.tolist(), fit.tolist())]
    rows.append(f"# degree={args.degree} samples={x.size} relative_error={rel!r}")
    sys.stdout.write("\n".join(rows) + "\n")
    return 0


BENCH_SETTINGS = (("vanilla", 128), ("vanilla", 4096), ("gl", 4), ("gl", 8))


def cmd_bench(args) -> int:
    scene, camera = _load(args)
    if args.repeat < 1:
        raise CliError("repeat: must be >= 1")
    workers = _workers(args)
    lo, hi = scene.field.bbox
    dt = args.dt if args.dt is not None else float(np.linalg.norm(hi - lo)) / 256.0
    images, stats = {}, {}
    for mode, n in BENCH_SETTINGS:
        cfg = _config(scene, mode, n, dt if mode == "gl" else None)
        times = []
        for _ in range(args.repeat):
            img, st = render_image(scene.field, camera, cfg, workers)
            times.append(st.wall_time)
        st.wall_time = statistics.median(times)
        images[mode, n], stats[mode, n] = img, st
    ref_key = ("vanilla", 4096)
    rows = [CSV_HEADER]
    for mode, n in BENCH_SETTINGS:
        rep = compare_report(images[ref_key], images[mode, n], stats[ref_key], stats[mode, n],
                             scene.name, mode, n, dt if mode == "gl" else None)
        rows.append(rep.csv_row())
    _write_text(args.out, "\n".join(rows) + "\n")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glvr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scene_args(p):
        p.add_argument("--scene", required=True)
        p.add_argument("--camera", type=int, default=0)
        p.add_argument("--threads", type=int, default=None, help="worker threads (0 = auto)")

    p = sub.add_parser("render", help="render one camera to a PPM/PNG image")
    scene_args(p)
    p.add_argument("--mode", choices=("vanilla", "gl"), default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--legacy-offset", action="store_true",
                   help="compatibility mode: place GL samples one step earlier")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("compare", help="dense baseline vs Gauss-Laguerre settings as CSV")
    scene_args(p)
    p.add_argument("--baseline-n", type=int, required=True)
    p.add_argument("--gl-n", type=_int_list, required=True)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("quad-table", help="print quadrature nodes and weights")
    p.add_argument("--kind", choices=("laguerre", "legendre"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.set_defaults(func=cmd_quad_table)

    p = sub.add_parser("verify-color", help="color-vs-optical-depth profile and polynomial fit")
    scene_args(p)
    p.add_argument("--pixel", type=_pixel, required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--channel", type=int, choices=(0, 1, 2), default=0)
    p.add_argument("--dt", type=float, default=None)
    p.set_defaults(func=cmd_verify_color)

    p = sub.add_parser("bench", help="timing and call counts for fixed settings")
    scene_args(p)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"glvr {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except FieldFormatError as exc:
        print(f"glvr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
