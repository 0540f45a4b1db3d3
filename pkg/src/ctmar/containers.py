"""Binary containers for sinograms, masks and images.

Layout: a magic line, one JSON header line, then a row-major payload of
little-endian float32 (sinograms, images) or uint8 0/1 (masks).
"""

import json
from pathlib import Path

import numpy as np

from .projector import UNITS, ScanGeometry, Sinogram
from .recon import ReconImage

SINO_MAGIC = b"SINO1\n"
MASK_MAGIC = b"MASK1\n"
IMG_MAGIC = b"IMG1\n"


class ContainerError(ValueError):
    pass


def _write(path, magic, header, payload):
    with open(path, "wb") as f:
        f.write(magic)
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(payload)


def _read(path, magic):
    data = Path(path).read_bytes()
    if not data.startswith(magic):
        raise ContainerError(f"{path}: bad magic, expected {magic!r}")
    end = data.find(b"\n", len(magic))
    if end < 0:
        raise ContainerError(f"{path}: missing header line")
    try:
        header = json.loads(data[len(magic) : end])
    except json.JSONDecodeError as e:
        raise ContainerError(f"{path}: malformed header: {e}") from None
    return header, data[end + 1 :]


def _payload(path, header, payload, dtype):
    dims = tuple(int(d) for d in header["dims"])
    expected = int(np.prod(dims)) * np.dtype(dtype).itemsize
    if len(payload) != expected:
        raise ContainerError(f"{path}: payload has {len(payload)} bytes, dims {dims} need {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def write_sinogram(path, sinogram):
    values = np.ascontiguousarray(sinogram.values, dtype="<f4")
    g = sinogram.geometry
    header = {
        "dims": list(values.shape),
        "layout": "angle-major",
        "unit": sinogram.unit,
        "geometry_hash": g.hash() if g else None,
        "geometry": g.to_dict() if g else None,
        "pixel_pitch_mm": g.detector_pitch_mm if g else None,
    }
    _write(path, SINO_MAGIC, header, values.tobytes())


def read_sinogram(path):
    header, payload = _read(path, SINO_MAGIC)
    if header.get("unit") not in UNITS:
        raise ContainerError(f"{path}: unknown unit tag {header.get('unit')!r}")
    values = _payload(path, header, payload, "<f4").astype(np.float32)
    geometry = ScanGeometry.from_dict(header["geometry"]) if header.get("geometry") else None
    if geometry is not None and geometry.hash() != header.get("geometry_hash"):
        raise ContainerError(f"{path}: geometry hash mismatch")
    return Sinogram(values, header["unit"], geometry)


def write_mask(path, mask, geometry=None):
    mask = np.asarray(mask, dtype=bool)
    header = {
        "dims": list(mask.shape),
        "layout": "angle-major" if geometry is not None else "row-major",
        "geometry_hash": geometry.hash() if geometry is not None else None,
    }
    _write(path, MASK_MAGIC, header, mask.astype(np.uint8).tobytes())


def read_mask(path):
    header, payload = _read(path, MASK_MAGIC)
    raw = _payload(path, header, payload, np.uint8)
    if np.any(raw > 1):
        raise ContainerError(f"{path}: mask payload must be 0/1 bytes")
    return raw.astype(bool)


def write_image(path, image):
    values = np.ascontiguousarray(image.values, dtype="<f4")
    header = {
        "dims": list(values.shape),
        "layout": "row-major",
        "unit": "cm^-1",
        "pixel_pitch_mm": image.pixel_pitch_mm,
        "provenance": image.provenance,
    }
    _write(path, IMG_MAGIC, header, values.tobytes())


def read_array(path):
    """Any image-container payload as ``(values, header)``."""
    header, payload = _read(path, IMG_MAGIC)
    return _payload(path, header, payload, "<f4").astype(np.float32), header


def read_image(path):
    values, header = read_array(path)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ContainerError(f"{path}: not a square reconstruction image")
    return ReconImage(values, float(header.get("pixel_pitch_mm") or 1.0), header.get("provenance", "uncorrected"))


def write_array(path, values, **meta):
    """Generic float32 2-D array in the image container (e.g. attention maps)."""
    values = np.ascontiguousarray(values, dtype="<f4")
    header = {"dims": list(values.shape), "layout": "row-major", **meta}
    _write(path, IMG_MAGIC, header, values.tobytes())
