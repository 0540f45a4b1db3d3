"""Classical sinogram completion: linear and weighted nearest-neighbour."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .projector import Sinogram


@dataclass(frozen=True)
class WnnConfig:
    k_neighbors: int = 8
    axis_weights: tuple = (1.0, 1.0)
    power: float = 1.0
    mu_wnn: float = 0.0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.power < 0:
            raise ValueError("power must be >= 0")
        if self.mu_wnn != 0.0:
            raise ValueError("the original masked value is never used (mu_wnn = 0)")


def _values_and_mask(sinogram, mask):
    values = sinogram.values if isinstance(sinogram, Sinogram) else np.asarray(sinogram)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise ValueError(f"mask shape {mask.shape} does not match sinogram {values.shape}")
    return values, mask


def _wrap(sinogram, values):
    if isinstance(sinogram, Sinogram):
        return Sinogram(values, sinogram.unit, sinogram.geometry)
    return values


def li_row(row, mask_row):
    """Fill masked runs of one row by linear interpolation between run ends."""
    out = np.array(row, dtype=np.float64)
    n = out.size
    known = np.flatnonzero(~mask_row)
    if known.size == 0:
        out[:] = 0.0
        return out
    j = 0
    while j < n:
        if not mask_row[j]:
            j += 1
            continue
        a = j
        while j < n and mask_row[j]:
            j += 1
        b = j - 1
        left, right = a - 1, b + 1
        if left < 0:
            out[a : b + 1] = out[right]
        elif right >= n:
            out[a : b + 1] = out[left]
        else:
            idx = np.arange(a, b + 1)
            span = right - left
            out[a : b + 1] = (out[left] * (right - idx) + out[right] * (idx - left)) / span
    return out


def li_mar(sinogram, mask):
    """Per-angle 1-D linear interpolation across the metal trace."""
    values, mask = _values_and_mask(sinogram, mask)
    out = np.array(values, copy=True)
    for r in np.flatnonzero(mask.any(axis=1)):
        out[r] = li_row(values[r], mask[r])
    return _wrap(sinogram, out)


def wnn_mar(sinogram, mask, config=WnnConfig()):
    """Inverse-distance weighted mean of the k nearest unmasked bins.

    Distances are Euclidean in (angle index, detector index) scaled by the
    axis weights; ties go to the lower angle, then the lower detector.
    """
    values, mask = _values_and_mask(sinogram, mask)
    out = np.array(values, copy=True)
    if not mask.any():
        return _wrap(sinogram, out)
    known = np.argwhere(~mask)
    if known.size == 0:
        raise ValueError("cannot complete a fully masked sinogram")
    wa, wd = config.axis_weights
    scale = np.array([wa, wd], dtype=np.float64)
    tree = cKDTree(known * scale)
    known_vals = values[~mask].astype(np.float64)
    k = min(config.k_neighbors, len(known))
    holes = np.argwhere(mask)
    dist_k, _ = tree.query(holes * scale, k=k)
    dist_k = np.atleast_2d(dist_k.reshape(len(holes), -1))[:, -1]
    # gather every candidate within the k-th distance so ties resolve exactly
    candidates = tree.query_ball_point(holes * scale, dist_k * (1 + 1e-9) + 1e-12)
    for (a, d), cand in zip(holes, candidates):
        cand = np.asarray(cand)
        ka, kd = known[cand, 0], known[cand, 1]
        dist = np.sqrt((wa * (ka - a)) ** 2 + (wd * (kd - d)) ** 2)
        order = np.lexsort((kd, ka, dist))[:k]
        w = 1.0 / dist[order] ** config.power
        v = known_vals[cand[order]]
        # sequential sums in neighbour order keep the result reproducible bit for bit
        out[a, d] = np.cumsum(w * v)[-1] / np.cumsum(w)[-1]
    return _wrap(sinogram, out)
