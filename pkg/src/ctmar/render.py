"""Windowed 8-bit grayscale rendering to PNG or binary PGM."""

from pathlib import Path

import numpy as np
from PIL import Image

# display windows used for figures
SINOGRAM_WINDOW = (0.0, 5.0)
REAL_SINOGRAM_WINDOW = (0.0, 7.0)
SOFT_TISSUE_WINDOW = (0.0, 0.15)
WIDE_WINDOW = (0.0, 0.4)


def to_gray(values, window):
    """Clamp to ``window`` and map linearly to 0..255, rounding half up."""
    lo, hi = (float(v) for v in window)
    if not lo < hi:
        raise ValueError(f"window_lo must be < window_hi, got {window}")
    v = np.clip(np.asarray(values, dtype=np.float64), lo, hi)
    return np.floor((v - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)


def auto_window(values):
    """min/max of the finite entries; -inf sentinels are ignored."""
    v = np.asarray(values, dtype=np.float64)
    finite = v[np.isfinite(v)]
    if finite.size == 0:
        return (0.0, 1.0)
    lo, hi = float(finite.min()), float(finite.max())
    return (lo, hi) if hi > lo else (lo, lo + 1.0)


def render(values, window, out):
    """Write ``values`` as an 8-bit image; ``.pgm`` selects PGM, anything else PNG."""
    gray = to_gray(values, window)
    if gray.ndim != 2:
        raise ValueError("render needs a 2-D array")
    out = Path(out)
    if out.suffix.lower() == ".pgm":
        h, w = gray.shape
        out.write_bytes(f"P5\n{w} {h}\n255\n".encode() + gray.tobytes())
    else:
        Image.fromarray(gray).save(out, format="PNG")
    return gray
