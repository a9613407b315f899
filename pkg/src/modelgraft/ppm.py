"""Binary PPM (P6, 8-bit) image files.

Pixels live as float32 H x W x 3 in [0,1] everywhere in this package; files
store the usual 0..255 bytes. PPM was picked because it round-trips with a
dozen lines of code and no codec dependency.
"""
from __future__ import annotations

import numpy as np


class PpmError(ValueError):
    pass


def write_ppm(path, pixels: np.ndarray):
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise PpmError(f"need H x W x 3 pixels, got {pixels.shape}")
    h, w = pixels.shape[:2]
    data = np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(b"P6"):
        raise PpmError("not a binary PPM (P6) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(blob):
            raise PpmError("truncated PPM header")
        c = blob[pos : pos + 1]
        if c == b"#":
            nl = blob.find(b"\n", pos)
            if nl < 0:
                raise PpmError("unterminated comment in PPM header")
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(blob) and not blob[end : end + 1].isspace():
                end += 1
            token = blob[pos:end]
            if not token.isdigit():
                raise PpmError(f"bad PPM header token {token!r}")
            fields.append(int(token))
            pos = end
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise PpmError(f"only 8-bit PPM supported, maxval {maxval}")
    need = w * h * 3
    raw = blob[pos : pos + need]
    if len(raw) < need:
        raise PpmError(f"PPM pixel data truncated: {len(raw)} of {need} bytes")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return (arr.astype(np.float32) / np.float32(255.0)).astype(np.float32)
