"""Minimal binary PGM (P5) / PPM (P6) reader and writer, 8-bit only.

PNG input is accepted through Pillow when it is installed.
"""

import os

import numpy as np

_WS = b" \t\r\n"


def encode_pgm(gray):
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError("PGM data must be a 2-D uint8 array")
    h, w = gray.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(gray).tobytes()


def encode_ppm(rgb):
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("PPM data must be an (H, W, 3) uint8 array")
    h, w, _ = rgb.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(rgb).tobytes()


def _header_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens = []
    pos = 2
    while len(tokens) < count:
        while pos < len(data) and data[pos] in _WS:
            pos += 1
        if pos >= len(data):
            raise ValueError("truncated netpbm header")
        if data[pos:pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WS and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return [int(t) for t in tokens], pos + 1


def decode_netpbm(data):
    """Decode P5/P6 bytes to a ``(H, W)`` or ``(H, W, 3)`` uint8 array."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r}")
    (w, h, maxval), start = _header_tokens(data, 3)
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    n = w * h * channels
    body = data[start:start + n]
    if len(body) != n:
        raise ValueError(f"expected {n} raster bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=np.uint8)
    return arr.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def read_image(path):
    """Read a PGM, PPM or PNG file into a uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image
        import io

        img = Image.open(io.BytesIO(data))
        img = img.convert("L") if img.mode in ("1", "L", "I", "I;16") else img.convert("RGB")
        return np.asarray(img, dtype=np.uint8).copy()
    return decode_netpbm(data)


def write_image(path, array):
    array = np.asarray(array)
    data = encode_pgm(array) if array.ndim == 2 else encode_ppm(array)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
