"""Poly-energetic, noisy X-ray measurement model."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from . import rng
from .projector import NORMALIZED_MEASUREMENT, Sinogram

NUM_EPS = 1e-12

# stream ids for the counter-based generator
_POISSON_STREAM = 1
_ELECTRONIC_STREAM = 2


@dataclass(frozen=True)
class SourceSpectrum:
    energies: np.ndarray
    weights: np.ndarray
    i0: float = 1.7e5

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.energies, dtype=np.float64))
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if e.size < 1 or e.shape != w.shape:
            raise ValueError("spectrum needs matching, non-empty energies and weights")
        if np.any(np.diff(e) <= 0):
            raise ValueError("spectrum energies must be strictly increasing")
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("spectrum weights must be non-negative with at least one positive")
        if not self.i0 > 0:
            raise ValueError("I0 must be positive")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.energies.size

    def to_dict(self):
        return {"energies_keV": self.energies.tolist(), "weights": self.weights.tolist(), "I0": self.i0}

    @classmethod
    def from_dict(cls, d):
        return cls(d["energies_keV"], d["weights"], float(d.get("I0", 1.7e5)))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DetectorModel:
    """Energy-integrating detector: gain ``gamma * E`` plus electronic noise."""

    gamma: float = 2.6e-3
    sigma_e_sq: float = 3.37

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.sigma_e_sq < 0:
            raise ValueError("sigma_e_sq must be non-negative")

    def gains(self, energies):
        return self.gamma * np.asarray(energies, dtype=np.float64)

    def to_dict(self):
        return {"gamma_pA_per_quanta_keV": self.gamma, "sigma_e_sq_pA2": self.sigma_e_sq}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["gamma_pA_per_quanta_keV"]), float(d["sigma_e_sq_pA2"]))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class NoiseConfig:
    poisson: bool = True
    electronic: bool = True
    seed: int = 0
    poisson_normal_threshold: float = 1e3

    def __post_init__(self):
        if self.poisson_normal_threshold < 0:
            raise ValueError("poisson_normal_threshold must be >= 0")


NOISELESS = NoiseConfig(poisson=False, electronic=False)


def default_spectrum(n=121, i0=1.7e5, e_min=10.0, e_max=130.0):
    """Kramers-shaped bremsstrahlung spectrum on ``n`` uniform energies, sum 1."""
    energies = np.linspace(e_min, e_max, n)
    w = np.clip(e_max * (e_max - energies) / energies, 0.0, None)
    if not np.any(w > 0):
        w = np.ones_like(energies)
    return SourceSpectrum(energies, w / w.sum(), i0)


def _check_stack(stack, spectrum):
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.shape[0] != spectrum.n:
        raise ValueError(f"line-integral stack depth {stack.shape[0]} != spectrum size {spectrum.n}")
    if not np.all(np.isfinite(stack)):
        raise ValueError("line integrals must be finite")
    if np.any(stack < 0):
        raise ValueError("line integrals must be non-negative")
    return stack


def expected_intensities(line_integral_stack, spectrum):
    """Mean photon counts ``I0 * eta(E_i) * exp(-p_i)`` per energy and bin."""
    stack = _check_stack(line_integral_stack, spectrum)
    blank = spectrum.i0 * spectrum.weights
    return blank[:, None, None] * np.exp(-stack)


def sample_poisson(means, keys, threshold=1e3):
    """Poisson counts keyed by integer ``keys`` (broadcast against ``means``).

    Means up to ``threshold`` use exact inversion of the Poisson CDF; larger
    means use the normal approximation ``mean + sqrt(mean) * z``.
    """
    means = np.asarray(means, dtype=np.float64)
    keys = [np.broadcast_to(k, means.shape) for k in keys]
    out = np.empty_like(means)
    small = means <= threshold
    if np.any(~small):
        m = means[~small]
        z = rng.normal(*(k[~small] for k in keys), _POISSON_STREAM)
        out[~small] = m + np.sqrt(m) * z
    if np.any(small):
        m = means[small]
        u = rng.uniform(*(k[small] for k in keys), _POISSON_STREAM)
        lo = np.full(m.shape, -1.0)
        hi = np.ceil(m + 10.0 * np.sqrt(m) + 20.0)
        # smallest k with CDF(k) >= u; CDF(lo) < u <= CDF(hi) throughout
        while True:
            active = hi - lo > 1
            if not np.any(active):
                break
            mid = np.floor((lo + hi) / 2)
            ge = special.pdtr(mid, m) >= u
            hi = np.where(active & ge, mid, hi)
            lo = np.where(active & ~ge, mid, lo)
        out[small] = hi
    return out


def detector_signal(intensities, energies, detector, noise, bin_keys=None):
    """Gain-weighted sum of (noisy) counts plus electronic noise, per bin.

    ``intensities`` has shape (N, ...) with the energy axis first. ``bin_keys``
    is a tuple of integer arrays identifying each bin for the noise streams;
    by default the flat bin index is used.
    """
    intensities = np.asarray(intensities, dtype=np.float64)
    gains = detector.gains(energies)
    bin_shape = intensities.shape[1:]
    if bin_keys is None:
        bin_keys = (np.arange(int(np.prod(bin_shape))).reshape(bin_shape),)
    total = np.zeros(bin_shape, dtype=np.float64)
    for i in range(intensities.shape[0]):
        if noise.poisson:
            counts = sample_poisson(intensities[i], (noise.seed, *bin_keys, i), noise.poisson_normal_threshold)
        else:
            counts = intensities[i]
        total += gains[i] * counts
    if noise.electronic and detector.sigma_e_sq > 0:
        z = rng.normal(noise.seed, *bin_keys, intensities.shape[0], _ELECTRONIC_STREAM)
        total += np.sqrt(detector.sigma_e_sq) * np.broadcast_to(z, bin_shape)
    return total


def measure(line_integral_stack, spectrum, detector, noise=NOISELESS, geometry=None):
    """Log-normalized poly-energetic measurement sinogram."""
    stack = _check_stack(line_integral_stack, spectrum)
    intensities = expected_intensities(stack, spectrum)
    gains = detector.gains(spectrum.energies)
    denom = float(np.sum(gains * spectrum.i0 * spectrum.weights))
    a, d = np.meshgrid(np.arange(stack.shape[1]), np.arange(stack.shape[2]), indexing="ij")
    numer = detector_signal(intensities, spectrum.energies, detector, noise, (a, d))
    numer = np.maximum(numer, NUM_EPS * denom)
    y = -np.log(numer / denom)
    return Sinogram(y, NORMALIZED_MEASUREMENT, geometry)


def beam_hardening_curve(material, thickness_cm, spectrum, detector):
    """Noiseless measurement for a ray crossing ``thickness_cm`` of one material."""
    t = np.asarray(thickness_cm, dtype=np.float64)
    mu = material.attenuation(spectrum.energies)
    gw = detector.gains(spectrum.energies) * spectrum.weights
    transmitted = (np.exp(-np.multiply.outer(t, mu)) * gw).sum(axis=-1)
    return -np.log(transmitted / gw.sum())
