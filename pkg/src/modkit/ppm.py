"""8-bit binary P6 PPM image output (and a reader for round-trip tests)."""

from __future__ import annotations

import os

import numpy as np


def write_ppm(path, image: np.ndarray) -> None:
    """Write an HxWx3 float image in [0, 1] as binary P6, maxval 255."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {image.shape}")
    pixels = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape[:2]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    os.replace(tmp, path)


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    offset = 0
    while len(fields) < 4:
        while offset < len(blob) and blob[offset : offset + 1].isspace():
            offset += 1
        if blob[offset : offset + 1] == b"#":  # comment line
            offset = blob.index(b"\n", offset) + 1
            continue
        end = offset
        while end < len(blob) and not blob[end : end + 1].isspace():
            end += 1
        fields.append(blob[offset:end])
        offset = end
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    offset += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(blob, dtype=np.uint8, count=h * w * 3, offset=offset)
    return pixels.reshape(h, w, 3).astype(np.float64) / 255.0
