"""Image/sinogram quality metrics and occlusion attention maps."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


def _arr(a):
    return np.asarray(a.values if hasattr(a, "values") else a, dtype=np.float64)


def mse(a, b):
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def masked_mse(a, b, mask):
    a, b = _arr(a), _arr(b)
    mask = np.asarray(mask, dtype=bool)
    if not (a.shape == b.shape == mask.shape):
        raise ValueError("a, b and mask shapes must match")
    if not mask.any():
        raise ValueError("masked MSE needs a non-empty mask")
    d = a[mask] - b[mask]
    return float(np.mean(d * d))


def psnr(reference, test, peak=None):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    ref = _arr(reference)
    if peak is None:
        peak = float(ref.max() - ref.min())
    err = mse(ref, test)
    if err == 0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / err))


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float | None = None


def _gaussian_window(size, sigma):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(reference, test, config=SsimConfig()):
    """Mean SSIM over all fully-contained Gaussian windows.

    Dynamic range defaults to the reference's max - min.
    """
    x, y = _arr(reference), _arr(test)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < config.window:
        raise ValueError(f"images must be at least {config.window} px on each side")
    L = config.data_range if config.data_range is not None else float(x.max() - x.min())
    if not L > 0:
        raise ValueError("SSIM dynamic range must be positive")
    c1 = (config.k1 * L) ** 2
    c2 = (config.k2 * L) ** 2
    w = _gaussian_window(config.window, config.sigma)
    pad = config.window // 2

    def filt(img):
        return ndimage.correlate(img, w, mode="reflect")[pad:-pad, pad:-pad]

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    s = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
    return float(s.mean())


@dataclass(frozen=True)
class AttentionConfig:
    patch: int = 11
    stride: int = 6
    seed: int = 0
    masked_only: bool = True

    def __post_init__(self):
        if self.patch < 1 or self.stride < 1:
            raise ValueError("patch and stride must be >= 1")


@dataclass
class AttentionMap:
    """log10 completion error per occlusion position.

    ``values[i, j]`` belongs to the patch whose top-left corner is
    ``(i * stride, j * stride)``; ``centers`` gives the patch centers.
    Zero error maps to ``-inf``.
    """

    values: np.ndarray
    row_centers: np.ndarray
    col_centers: np.ndarray
    baseline: float


def attention_grid(shape, patch, stride):
    rows = np.arange(0, shape[0] - patch + 1, stride)
    cols = np.arange(0, shape[1] - patch + 1, stride)
    return rows, cols


def _log10(v):
    with np.errstate(divide="ignore"):
        return float(np.log10(v)) if v > 0 else float("-inf")


def attention_map(completer, x, mask, reference, config=AttentionConfig(), threads=1):
    """Occlusion sensitivity of a sinogram completer.

    Each patch of ``x`` on the stride grid is replaced by U(0, m) noise,
    m = max(x), the completion is recomputed and its error against
    ``reference`` (masked bins by default) is recorded.
    """
    x = _arr(x)
    y = _arr(reference)
    mask = np.asarray(mask, dtype=bool)
    m = float(x.max())
    if not m > 0:
        raise ValueError("attention map needs a sinogram with a positive maximum")
    err = (lambda a: masked_mse(a, y, mask)) if config.masked_only else (lambda a: mse(a, y))
    baseline = err(completer(x, mask))
    rows, cols = attention_grid(x.shape, config.patch, config.stride)
    values = np.empty((rows.size, cols.size))
    p = config.patch

    def work(ij):
        i, j = ij
        rng = np.random.default_rng([config.seed, i, j])
        xp = x.copy()
        r, c = rows[i], cols[j]
        xp[r : r + p, c : c + p] = rng.uniform(0.0, m, size=(p, p))
        values[i, j] = _log10(err(completer(xp, mask)))

    jobs = [(i, j) for i in range(rows.size) for j in range(cols.size)]
    if threads <= 1:
        for ij in jobs:
            work(ij)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, jobs))
    half = (p - 1) / 2
    return AttentionMap(values, rows + half, cols + half, baseline)
