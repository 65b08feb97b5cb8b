"""8-bit grayscale image I/O.

Binary PGM (P5, maxval <= 255) is the canonical interchange format and is
read and written natively, including comment lines in headers. Other
formats (PNG etc.) are handled through Pillow when it is installed.
Quantization, rounding to the nearest level and clamping to [0, 255],
happens only here at export time; the rest of the package works on real
values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .lattice import ImageBuffer

__all__ = ["quantize", "read_pgm", "write_pgm", "read_gray_image", "write_gray_image"]


def quantize(data: np.ndarray | ImageBuffer) -> np.ndarray:
    """Round to the nearest 8-bit level, clamped to [0, 255]."""
    if isinstance(data, ImageBuffer):
        data = data.as_grid()
    arr = np.asarray(data, dtype=np.float64)
    return np.clip(np.rint(arr), 0.0, 255.0).astype(np.uint8)


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM into a (height, width) uint8 array."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (missing P5 magic)")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            newline = raw.find(b"\n", pos)
            pos = len(raw) if newline < 0 else newline + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        try:
            fields.append(int(raw[start:pos]))
        except ValueError as exc:
            raise ValueError(f"{path}: malformed PGM header token") from exc
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError(f"{path}: bad PGM dimensions {width} x {height}")
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}, only 8-bit supported")
    raster = raw[pos : pos + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    """Write a (height, width) uint8 array as binary PGM."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {arr.dtype} (quantize first)")
    height, width = arr.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + arr.tobytes())


def read_gray_image(path: str | Path) -> np.ndarray:
    """Read a grayscale image (PGM natively, others via Pillow)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    try:
        from PIL import Image
    except ImportError as exc:
        raise RuntimeError(
            f"reading {path.suffix} images needs Pillow; install the png extra "
            f"or convert to .pgm"
        ) from exc
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def write_gray_image(path: str | Path, img: np.ndarray) -> None:
    """Write a uint8 grayscale image (PGM natively, others via Pillow)."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, img)
        return
    try:
        from PIL import Image
    except ImportError as exc:
        raise RuntimeError(
            f"writing {path.suffix} images needs Pillow; install the png extra "
            f"or use .pgm"
        ) from exc
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 image")
    Image.fromarray(arr, mode="L").save(path)
