"""Run profiles: desk-scale defaults and the full-size scanner setup."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .learned import DiscriminatorSpec, GeneratorSpec, TrainSchedule
from .physics import DetectorModel, NoiseConfig, default_spectrum
from .projector import ScanGeometry
from .recon import FbpConfig
from .scene import MetalConfig, SceneConfig


@dataclass(frozen=True)
class RunConfig:
    profile: str = "desk"
    grid: int = 128
    n_angles: int = 180
    n_detectors: int = 128
    fov_mm: float = 475.0
    pad_shape: tuple | None = (192, 128)
    n_energies: int = 13
    i0: float = 1.7e5
    gamma: float = 2.6e-3
    sigma_e_sq: float = 3.37
    poisson: bool = True
    electronic: bool = True
    n_objects_range: tuple = (1, 5)
    object_size_mm: tuple = (15.0, 60.0)
    object_shapes: tuple = ("disk", "rectangle")
    metal_size_mm: tuple = (5.0, 20.0)
    metal_shapes: tuple = ("disk", "rectangle")
    max_metals: int = 5
    mask_dilation: int = 2
    fbp_filter: str = "ram-lak"
    gen_widths: tuple = (16, 32, 64)
    disc_widths: tuple = (16, 32, 64)
    epochs: int = 25
    batch_size: int = 6
    lam: float = 10.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))
        if self.n_energies < 1:
            raise ValueError("n_energies must be >= 1")
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        self.geometry  # validates shapes

    @property
    def geometry(self):
        return ScanGeometry(self.n_angles, self.n_detectors, self.fov_mm, self.pad_shape)

    @property
    def network_shape(self):
        return tuple(self.pad_shape) if self.pad_shape else (self.n_angles, self.n_detectors)

    def spectrum(self):
        return default_spectrum(self.n_energies, self.i0)

    def detector(self):
        return DetectorModel(self.gamma, self.sigma_e_sq)

    def noise(self, seed):
        return NoiseConfig(self.poisson, self.electronic, int(seed))

    def scene_config(self):
        return SceneConfig(self.n_objects_range, self.object_size_mm, self.fov_mm, self.object_shapes)

    def metal_config(self):
        return MetalConfig(self.metal_size_mm, self.metal_shapes, self.max_metals)

    def fbp_config(self):
        return FbpConfig(self.fbp_filter, self.grid)

    def generator_spec(self):
        return GeneratorSpec(widths=self.gen_widths)

    def discriminator_spec(self):
        return DiscriminatorSpec(widths=self.disc_widths)

    def schedule(self, seed=0, **overrides):
        kw = {"epochs": self.epochs, "batch_size": self.batch_size, "lam": self.lam, **overrides}
        return TrainSchedule(seed=int(seed), **kw)

    def to_dict(self):
        return asdict(self)


PROFILES = {
    "desk": RunConfig(),
    # small enough to train in minutes on one core: 64 angles x 48 detectors
    "toy": RunConfig(
        profile="toy",
        grid=48,
        n_angles=64,
        n_detectors=48,
        pad_shape=None,
        object_size_mm=(30.0, 100.0),
        metal_size_mm=(15.0, 35.0),
        metal_shapes=("disk",),
        max_metals=1,
        epochs=12,
    ),
    "paper": RunConfig(
        profile="paper",
        grid=1024,
        n_angles=720,
        n_detectors=1024,
        pad_shape=(768, 1024),
        n_energies=121,
        gen_widths=(64, 128, 256, 512, 512, 512),
        disc_widths=(64, 128, 256, 512),
        epochs=25,
    ),
}


def load_run_config(profile="desk", path=None):
    """Profile defaults, optionally overridden by a JSON object of field values."""
    try:
        cfg = PROFILES[profile]
    except KeyError:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}") from None
    if path is not None:
        overrides = json.loads(Path(path).read_text())
        known = {f.name for f in fields(RunConfig)}
        unknown = set(overrides) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **overrides)
    return cfg
