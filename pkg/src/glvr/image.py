"""Binary PPM (P6) reading/writing; PNG through Pillow when the extension asks for it."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .metrics import ImageBuffer

__all__ = ["encode_ppm", "decode_ppm", "save_image", "load_ppm"]


def encode_ppm(image: ImageBuffer) -> bytes:
    """P6 bytes, 8 bits per channel, linear values mapped by ``round(255 * v)``."""
    data = image.to_bytes()
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + data.tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse P6 bytes into an ``(H, W, 3)`` uint8 array."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ValueError("not a binary PPM (P6) file")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=pos + 1)
    return pixels.reshape(height, width, 3)


def load_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


def save_image(image: ImageBuffer, path) -> None:
    """Write ``.ppm`` natively or ``.png`` via Pillow."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        path.write_bytes(encode_ppm(image))
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(image.to_bytes(), mode="RGB").save(path)
    else:
        raise ValueError(f"unsupported image extension {path.suffix!r} (use .ppm or .png)")
