"""Binary PPM (P6) and PGM (P5) codecs for image and spectrum inspection.

Images travel as CHW float arrays in [0,1]; 8-bit quantization rounds to
nearest. Readers accept '#' comments in headers, as the formats allow.
"""

from __future__ import annotations

import numpy as np


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, image_chw: np.ndarray) -> None:
    """Write a 3xHxW float image in [0,1] as binary PPM."""
    img = np.asarray(image_chw)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"write_ppm: expected (3,H,W) image, got shape {img.shape}")
    h, w = img.shape[1], img.shape[2]
    body = _quantize(img).transpose(1, 2, 0).tobytes()
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(body)


def write_pgm(path, grid: np.ndarray) -> None:
    """Write an HxW float grid in [0,1] as binary PGM."""
    g = np.asarray(grid)
    if g.ndim != 2:
        raise ValueError(f"write_pgm: expected a 2-D grid, got shape {g.shape}")
    h, w = g.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(_quantize(g).tobytes())


def _read_header(f, magic: bytes):
    if f.read(2) != magic:
        raise ValueError(f"not a {magic.decode()} file")
    fields = []
    while len(fields) < 3:
        tok = b""
        ch = f.read(1)
        while ch.isspace():
            ch = f.read(1)
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        while ch and not ch.isspace():
            tok += ch
            ch = f.read(1)
        if not tok:
            raise ValueError("truncated header")
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    return w, h


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into a 3xHxW float32 array in [0,1]."""
    with open(path, "rb") as f:
        w, h = _read_header(f, b"P6")
        raw = f.read(w * h * 3)
    if len(raw) != w * h * 3:
        raise ValueError(f"truncated pixel data in {path}")
    hwc = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return (hwc.transpose(2, 0, 1).astype(np.float32)) / 255.0


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into an HxW float32 grid in [0,1]."""
    with open(path, "rb") as f:
        w, h = _read_header(f, b"P5")
        raw = f.read(w * h)
    if len(raw) != w * h:
        raise ValueError(f"truncated pixel data in {path}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(np.float32) / 255.0
