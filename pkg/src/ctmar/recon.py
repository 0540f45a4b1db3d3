"""Filtered back projection, MHU conversion and metal segmentation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .morphology import dilate, erode, morphology  # noqa: F401
from .scene import pixel_centers

PROVENANCE = ("uncorrected", "li", "wnn", "learned", "reference", "none")


@dataclass
class ReconImage:
    values: np.ndarray
    pixel_pitch_mm: float
    provenance: str = "uncorrected"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("reconstruction must be a square 2-D image")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("reconstruction contains non-finite values")
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")


@dataclass(frozen=True)
class FbpConfig:
    filter: str = "ram-lak"
    n_pixels: int = 256

    def __post_init__(self):
        if self.filter not in ("ram-lak", "hann"):
            raise ValueError(f"unknown filter {self.filter!r}")
        if self.n_pixels < 2:
            raise ValueError("n_pixels must be >= 2")


@dataclass(frozen=True)
class MhuConfig:
    mu_water: float = 0.202527
    offset: float = 1000.0
    scale: float = 1000.0

    def __post_init__(self):
        if not self.mu_water > 0:
            raise ValueError("mu_water must be positive")


def ramp_filter(n_detectors, kind="ram-lak"):
    """Frequency response of the band-limited ramp, from its spatial kernel.

    Building the response from the sampled spatial kernel (rather than
    sampling |f| directly) keeps the DC term right.
    """
    size = max(64, 2 * int(2 ** np.ceil(np.log2(n_detectors))))
    n = np.concatenate([np.arange(0, size // 2 + 1), np.arange(-size // 2 + 1, 0)])
    h = np.zeros(size)
    h[0] = 0.25
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi * n[odd]) ** 2
    response = np.real(np.fft.fft(h))
    if kind == "hann":
        f = np.fft.fftfreq(size)
        response *= 0.5 * (1.0 + np.cos(2.0 * np.pi * f))
    return response


def filter_sinogram(values, detector_pitch_mm, kind="ram-lak"):
    values = np.asarray(values, dtype=np.float64)
    n_det = values.shape[1]
    response = ramp_filter(n_det, kind)
    spectrum = np.fft.fft(values, n=response.size, axis=1) * response
    # the unit-pitch kernel above is scaled by 1/tau for pitch tau (cm)
    return np.real(np.fft.ifft(spectrum, axis=1))[:, :n_det] / (detector_pitch_mm / 10.0)


def backproject(filtered, geometry, n_pixels, threads=1):
    filtered = np.asarray(filtered, dtype=np.float64)
    n_det = geometry.n_detectors
    pitch = geometry.detector_pitch_mm
    x, y = pixel_centers(n_pixels, geometry.fov_mm)
    angles = geometry.angles
    cos, sin = np.cos(angles), np.sin(angles)
    padded = np.pad(filtered, ((0, 0), (1, 1)))
    image = np.zeros((n_pixels, n_pixels))

    def rows(sl):
        acc = np.zeros((sl.stop - sl.start, n_pixels))
        yy = y[sl, None]
        for k in range(len(angles)):
            u = (x[None, :] * cos[k] + yy * sin[k]) / pitch + n_det / 2 + 0.5
            j = np.floor(u)
            valid = (j >= 0) & (j <= n_det)
            j = np.clip(j, 0, n_det).astype(np.intp)
            f = u - j
            row = padded[k]
            acc += np.where(valid, row[j] * (1.0 - f) + row[np.minimum(j + 1, n_det + 1)] * f, 0.0)
        image[sl] = acc

    chunk = max(1, n_pixels // max(1, threads))
    slices = [slice(i, min(i + chunk, n_pixels)) for i in range(0, n_pixels, chunk)]
    if threads <= 1:
        for sl in slices:
            rows(sl)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(rows, slices))
    image *= np.pi / len(angles)
    xx, yy = np.meshgrid(x, y)
    image[xx**2 + yy**2 > (geometry.fov_mm / 2) ** 2] = 0.0
    return image


def fbp(sinogram, geometry, config=FbpConfig(), threads=1, provenance="uncorrected"):
    """Ramp-filtered parallel-beam back projection; output in cm^-1."""
    values = sinogram.values if hasattr(sinogram, "values") else np.asarray(sinogram)
    if values.shape != geometry.shape:
        raise ValueError(f"sinogram shape {values.shape} does not match geometry {geometry.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("sinogram contains non-finite values")
    filtered = filter_sinogram(values, geometry.detector_pitch_mm, config.filter)
    image = backproject(filtered, geometry, config.n_pixels, threads)
    return ReconImage(image, geometry.fov_mm / config.n_pixels, provenance)


def to_mhu(image, config=MhuConfig()):
    mu = image.values if hasattr(image, "values") else np.asarray(image)
    mu = np.asarray(mu, dtype=np.float64)
    return config.offset + config.scale * (mu - config.mu_water) / config.mu_water


def segment_metal(image, threshold_mhu=4000.0, erode_r=2, dilate_r=4, mhu=MhuConfig()):
    """Threshold in MHU, erode to drop specks, then dilate to over-segment."""
    mask = to_mhu(image, mhu) > threshold_mhu
    return dilate(erode(mask, erode_r), dilate_r)


def reinsert_metal(corrected, image_metal_mask, uncorrected):
    mask = np.asarray(image_metal_mask, dtype=bool)
    if not (mask.shape == corrected.values.shape == uncorrected.values.shape):
        raise ValueError("corrected, uncorrected and mask shapes must match")
    values = np.where(mask, uncorrected.values, corrected.values)
    return ReconImage(values, corrected.pixel_pitch_mm, corrected.provenance)
