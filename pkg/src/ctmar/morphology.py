import numpy as np
from scipy import ndimage


def disk(radius):
    """Discrete disk {(dx, dy): dx^2 + dy^2 <= r^2} as a boolean footprint."""
    r = int(radius)
    if r < 0:
        raise ValueError("radius must be >= 0")
    d = np.arange(-r, r + 1)
    return d[:, None] ** 2 + d[None, :] ** 2 <= r * r


def erode(mask, radius):
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=disk(radius), border_value=0)


def dilate(mask, radius):
    mask = np.asarray(mask, dtype=bool)
    if radius == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=disk(radius), border_value=0)


def morphology(mask, op, disk_radius_px):
    if op == "erode":
        return erode(mask, disk_radius_px)
    if op == "dilate":
        return dilate(mask, disk_radius_px)
    raise ValueError(f"unknown morphology op {op!r}")
