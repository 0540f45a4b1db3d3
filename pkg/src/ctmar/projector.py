"""Parallel-beam geometry and ray-driven forward projection."""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .morphology import dilate

LINE_INTEGRAL = "line_integral"
NORMALIZED_MEASUREMENT = "normalized_measurement"
UNITS = (LINE_INTEGRAL, NORMALIZED_MEASUREMENT)

MASK_EPS = 1e-6


@dataclass(frozen=True)
class ScanGeometry:
    """Parallel-beam scan over [0, 180) degrees.

    ``pad_shape`` is the (rows, cols) zero-pad target used to fit network
    input sizes; rows index angles and cols index detectors.
    """

    n_angles: int = 720
    n_detectors: int = 1024
    fov_mm: float = 475.0
    pad_shape: tuple | None = None

    def __post_init__(self):
        if self.n_angles < 1:
            raise ValueError("n_angles must be >= 1")
        if self.n_detectors < 2:
            raise ValueError("n_detectors must be >= 2")
        if not self.fov_mm > 0:
            raise ValueError("fov_mm must be positive")
        if self.pad_shape is not None:
            pad = tuple(int(v) for v in self.pad_shape)
            if pad[0] < self.n_angles or pad[1] < self.n_detectors:
                raise ValueError("pad_shape must be at least the native sinogram shape")
            object.__setattr__(self, "pad_shape", pad)

    @property
    def shape(self):
        return (self.n_angles, self.n_detectors)

    @property
    def detector_pitch_mm(self):
        return self.fov_mm / self.n_detectors

    @property
    def angles(self):
        return np.arange(self.n_angles) * (np.pi / self.n_angles)

    @property
    def detector_offsets_mm(self):
        n = self.n_detectors
        return (np.arange(n) + 0.5 - n / 2) * self.detector_pitch_mm

    def to_dict(self):
        return {
            "n_angles": self.n_angles,
            "n_detectors": self.n_detectors,
            "fov_mm": self.fov_mm,
            "pad_shape": list(self.pad_shape) if self.pad_shape else None,
        }

    @classmethod
    def from_dict(cls, d):
        pad = d.get("pad_shape")
        return cls(int(d["n_angles"]), int(d["n_detectors"]), float(d["fov_mm"]), tuple(pad) if pad else None)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Sinogram:
    values: np.ndarray
    unit: str
    geometry: ScanGeometry | None = None

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValueError(f"unknown sinogram unit {self.unit!r}")
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("sinogram values must be 2-D (angle x detector)")

    @property
    def shape(self):
        return self.values.shape


def _project_angle(img_pad, img_t_pad, n, pitch, theta, s):
    c, sn = np.cos(theta), np.sin(theta)
    idx = np.arange(n)
    if abs(c) >= abs(sn):
        # one sample per image row, linear interpolation along the row
        y = (n / 2 - 0.5 - idx) * pitch
        t = (y[None, :] - s[:, None] * sn) / c
        x = s[:, None] * c - t * sn
        coord = x / pitch + n / 2 + 0.5
        src = img_pad
        step = pitch / abs(c)
    else:
        x = (idx + 0.5 - n / 2) * pitch
        t = (s[:, None] * c - x[None, :]) / sn
        y = s[:, None] * sn + t * c
        coord = n / 2 + 0.5 - y / pitch
        src = img_t_pad
        step = pitch / abs(sn)
    k = np.floor(coord)
    valid = (k >= 0) & (k <= n)
    k = np.clip(k, 0, n).astype(np.intp)
    f = coord - k
    rows = np.broadcast_to(idx, k.shape)
    v = src[rows, k] * (1.0 - f) + src[rows, np.minimum(k + 1, n + 1)] * f
    v = np.where(valid, v, 0.0)
    # mm -> cm
    return v.sum(axis=1) * (step / 10.0)


def project_array(image, geometry, threads=1):
    """Line integrals of a square image (float64 result, angle-major)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError("image must be square")
    n = image.shape[0]
    pitch = geometry.fov_mm / n
    img_pad = np.pad(image, ((0, 0), (1, 1)))
    img_t_pad = np.pad(np.ascontiguousarray(image.T), ((0, 0), (1, 1)))
    s = geometry.detector_offsets_mm
    angles = geometry.angles
    out = np.empty(geometry.shape, dtype=np.float64)

    def work(k):
        out[k] = _project_angle(img_pad, img_t_pad, n, pitch, angles[k], s)

    if threads <= 1:
        for k in range(len(angles)):
            work(k)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, range(len(angles))))
    return out


def forward_project(mu_map, geometry, threads=1):
    """Sinogram of line integrals of ``mu_map`` (cm^-1) along parallel rays."""
    mu_map = np.asarray(mu_map)
    if np.any(mu_map < 0):
        raise ValueError("attenuation map must be non-negative")
    return Sinogram(project_array(mu_map, geometry, threads), LINE_INTEGRAL, geometry)


def project_metal_mask(metal_image_mask, geometry, dilation_radius_px=2, threads=1):
    """Metal trace: bins whose ray touches the mask, grown by a disk."""
    mask = np.asarray(metal_image_mask, dtype=bool)
    trace = project_array(mask.astype(np.float64), geometry, threads) > MASK_EPS
    return dilate(trace, dilation_radius_px)


def apply_mask(sinogram, mask):
    """Delete masked bins (fill value 0)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != sinogram.values.shape:
        raise ValueError(f"mask shape {mask.shape} does not match sinogram {sinogram.values.shape}")
    values = np.where(mask, np.float32(0), sinogram.values)
    return Sinogram(values, sinogram.unit, sinogram.geometry)


def _pad_widths(shape, target):
    widths = []
    for n, m in zip(shape, target):
        extra = m - n
        if extra < 0:
            raise ValueError(f"pad target {target} is smaller than {shape}")
        widths.append((extra // 2, extra - extra // 2))
    return widths


def pad_array(values, target):
    """Symmetric zero pad; an odd remainder goes to the trailing side."""
    return np.pad(values, _pad_widths(values.shape, tuple(target)))


def crop_array(values, target):
    target = tuple(target)
    if target[0] > values.shape[0] or target[1] > values.shape[1]:
        raise ValueError(f"crop target {target} is larger than input {values.shape}")
    (r0, _), (c0, _) = _pad_widths(target, values.shape)
    return values[r0 : r0 + target[0], c0 : c0 + target[1]]


def pad(sinogram, pad_shape):
    return Sinogram(pad_array(sinogram.values, pad_shape), sinogram.unit, sinogram.geometry)


def crop(sinogram, shape):
    return Sinogram(crop_array(sinogram.values, shape), sinogram.unit, sinogram.geometry)
