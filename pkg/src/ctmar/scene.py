"""Materials and the stochastic bag/scene generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from shapely.affinity import rotate, translate
from shapely.geometry import Point, box

ENERGY_MIN_KEV = 10.0
ENERGY_MAX_KEV = 130.0
MU_WATER_65KEV = 0.202527

# Two-parameter curves mu(E) = c_photo / E**3 + c_compton, fitted to rough
# attenuation values (cm^-1) at 30 keV and 100 keV. Water is pinned at 65 keV.
_NON_METALS = [
    ("Water", "H2O", None),
    ("Rubber", "C5H8", (0.225, 0.150)),
    ("Silicon", "Si", (3.346, 0.428)),
    ("Graphite", "C", (0.436, 0.257)),
    ("Teflon", "C2F4", (0.704, 0.328)),
    ("Delrin", "CH2O", (0.409, 0.226)),
    ("Plastic", "C2H4", (0.231, 0.154)),
    ("Acrylic", "C5O2H8", (0.330, 0.190)),
    ("PVC", "C2H3Cl", (1.380, 0.248)),
    ("Neoprene", "C4H5Cl", (0.920, 0.215)),
]
_METALS = [
    ("Silver", "Ag", (262.0, 15.4)),
    ("Copper", "Cu", (97.7, 4.10)),
    ("Tungsten", "W", (438.0, 85.7)),
    ("Iron", "Fe", (64.4, 2.93)),
    ("Lead", "Pb", (344.0, 63.0)),
    ("Tin", "Sn", (227.0, 12.4)),
    ("Mercury", "Hg", (338.0, 70.0)),
    ("Zinc", "Zn", (89.0, 2.85)),
]


class PlacementError(RuntimeError):
    """Raised when a primitive cannot be placed within the attempt budget."""


@dataclass(frozen=True)
class Material:
    id: int
    name: str
    formula_label: str
    is_metal: bool
    energies: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        m = np.asarray(self.mu, dtype=np.float64)
        if e.ndim != 1 or e.shape != m.shape or e.size < 1:
            raise ValueError(f"{self.name}: malformed attenuation curve")
        if np.any(np.diff(e) <= 0):
            raise ValueError(f"{self.name}: curve energies must be strictly increasing")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError(f"{self.name}: attenuation must be finite and non-negative")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "mu", m)

    def attenuation(self, energy_kev):
        """Linearly interpolated mu (cm^-1) at the given energies."""
        energy_kev = np.asarray(energy_kev, dtype=np.float64)
        if np.any(energy_kev < self.energies[0]) or np.any(energy_kev > self.energies[-1]):
            raise ValueError(
                f"{self.name}: energy outside curve range "
                f"[{self.energies[0]}, {self.energies[-1]}] keV"
            )
        return np.interp(energy_kev, self.energies, self.mu)


def _synthetic_curve(mu30, mu100, energies):
    c_photo = (mu30 - mu100) / (30.0**-3 - 100.0**-3)
    c_compton = mu100 - c_photo * 100.0**-3
    return c_photo / energies**3 + c_compton


def build_material_table():
    """Air, ten non-metals and eight metals with synthetic curves on 10-130 keV."""
    energies = np.arange(ENERGY_MIN_KEV, ENERGY_MAX_KEV + 0.5, 1.0)
    table = [Material(0, "Air", "", False, energies, np.zeros_like(energies))]
    for name, formula, pts in _NON_METALS:
        if pts is None:
            # pin water to the reference value at 65 keV and a 30 keV anchor
            c_photo = (0.376 - MU_WATER_65KEV) / (30.0**-3 - 65.0**-3)
            c_compton = MU_WATER_65KEV - c_photo * 65.0**-3
            mu = c_photo / energies**3 + c_compton
        else:
            mu = _synthetic_curve(*pts, energies)
        table.append(Material(len(table), name, formula, False, energies, mu))
    for name, formula, pts in _METALS:
        table.append(Material(len(table), name, formula, True, energies, _synthetic_curve(*pts, energies)))
    return table


def save_material_table(table, path):
    rows = [
        {
            "name": m.name,
            "formula": m.formula_label,
            "is_metal": m.is_metal,
            "curve": [[float(e), float(u)] for e, u in zip(m.energies, m.mu)],
        }
        for m in table
    ]
    Path(path).write_text(json.dumps(rows, indent=1) + "\n")


def load_material_table(path):
    """Read a material table; entry 0 must be air (all-zero curve)."""
    rows = json.loads(Path(path).read_text())
    table = []
    for i, row in enumerate(rows):
        curve = np.asarray(row["curve"], dtype=np.float64)
        if curve.ndim != 2 or curve.shape[1] != 2:
            raise ValueError(f"material {i}: curve must be a list of [keV, mu] pairs")
        table.append(
            Material(i, row["name"], row.get("formula", ""), bool(row["is_metal"]), curve[:, 0], curve[:, 1])
        )
    if not table or np.any(table[0].mu != 0) or table[0].is_metal:
        raise ValueError("material 0 must be air with zero attenuation")
    return table


@dataclass(frozen=True)
class ScenePrimitive:
    """A disk (``radius``) or a rotated rectangle (``half_extents``, ``rotation``)."""

    shape: str
    center: tuple
    material_id: int
    radius: float = 0.0
    half_extents: tuple = (0.0, 0.0)
    rotation: float = 0.0

    def __post_init__(self):
        if self.shape == "disk":
            if not self.radius > 0:
                raise ValueError("disk radius must be positive")
        elif self.shape == "rectangle":
            if not (self.half_extents[0] > 0 and self.half_extents[1] > 0):
                raise ValueError("rectangle half-extents must be positive")
        else:
            raise ValueError(f"unknown primitive shape {self.shape!r}")

    @property
    def bounding_radius(self):
        if self.shape == "disk":
            return self.radius
        return math.hypot(*self.half_extents)

    def contains(self, x, y):
        dx = x - self.center[0]
        dy = y - self.center[1]
        if self.shape == "disk":
            return dx * dx + dy * dy <= self.radius * self.radius
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (np.abs(u) <= self.half_extents[0]) & (np.abs(v) <= self.half_extents[1])

    def geometry(self):
        if self.shape == "disk":
            return Point(*self.center).buffer(self.radius, quad_segs=32)
        a, b = self.half_extents
        g = rotate(box(-a, -b, a, b), self.rotation, origin=(0, 0), use_radians=True)
        return translate(g, *self.center)

    def to_dict(self):
        d = {"shape": self.shape, "center": list(self.center), "material_id": self.material_id}
        if self.shape == "disk":
            d["radius"] = self.radius
        else:
            d["half_extents"] = list(self.half_extents)
            d["rotation"] = self.rotation
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            shape=d["shape"],
            center=tuple(d["center"]),
            material_id=int(d["material_id"]),
            radius=float(d.get("radius", 0.0)),
            half_extents=tuple(d.get("half_extents", (0.0, 0.0))),
            rotation=float(d.get("rotation", 0.0)),
        )


@dataclass(frozen=True)
class SceneSpec:
    fov_mm: float = 475.0
    primitives: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if not self.fov_mm > 0:
            raise ValueError("fov_mm must be positive")
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def to_dict(self):
        return {"fov_mm": self.fov_mm, "seed": self.seed, "primitives": [p.to_dict() for p in self.primitives]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["fov_mm"], tuple(ScenePrimitive.from_dict(p) for p in d["primitives"]), int(d["seed"]))


@dataclass(frozen=True)
class SceneConfig:
    n_objects_range: tuple = (1, 5)
    size_range_mm: tuple = (15.0, 60.0)
    fov_mm: float = 475.0
    shapes: tuple = ("disk", "rectangle")
    max_attempts: int = 1000


@dataclass(frozen=True)
class MetalConfig:
    size_range_mm: tuple = (5.0, 20.0)
    shapes: tuple = ("disk", "rectangle")
    max_metals: int = 5
    max_attempts: int = 1000
    check_pixels: int = 256


@dataclass
class LabelImage:
    grid: np.ndarray
    pixel_pitch_mm: float

    @property
    def n_pixels(self):
        return self.grid.shape[0]


def pixel_centers(n_pixels, fov_mm):
    """Pixel-center x (columns) and y (rows, y up) coordinates in mm."""
    pitch = fov_mm / n_pixels
    x = (np.arange(n_pixels) + 0.5 - n_pixels / 2) * pitch
    return x, -x


def _random_primitive(rng, shapes, size_range, material_ids, fov_mm):
    shape = shapes[rng.integers(len(shapes))]
    material_id = int(material_ids[rng.integers(len(material_ids))])
    lo, hi = size_range
    half_fov = fov_mm / 2
    cx, cy = rng.uniform(-half_fov, half_fov, size=2)
    if shape == "disk":
        prim = ScenePrimitive("disk", (float(cx), float(cy)), material_id, radius=float(rng.uniform(lo, hi)))
    else:
        a, b = rng.uniform(lo, hi, size=2)
        theta = rng.uniform(0, math.pi)
        prim = ScenePrimitive(
            "rectangle", (float(cx), float(cy)), material_id, half_extents=(float(a), float(b)), rotation=float(theta)
        )
    return prim


def _fits(prim, fov_mm):
    # keep objects inside the inscribed circle so every ray sees them fully
    return math.hypot(*prim.center) + prim.bounding_radius <= fov_mm / 2


def sample_scene(config, seed, table=None):
    """Random metal-free scene: object count, shape, size, material all uniform."""
    lo, hi = config.n_objects_range
    if lo < 0 or hi < lo:
        raise ValueError("n_objects_range must be a non-empty range of non-negative counts")
    if not config.size_range_mm[0] > 0 or config.size_range_mm[1] < config.size_range_mm[0]:
        raise ValueError("size_range_mm must be a non-empty positive range")
    table = table if table is not None else build_material_table()
    non_metal_ids = [m.id for m in table if not m.is_metal and m.id != 0]
    rng = np.random.default_rng(seed)
    n = int(rng.integers(lo, hi + 1))
    prims = []
    for k in range(n):
        for _ in range(config.max_attempts):
            prim = _random_primitive(rng, config.shapes, config.size_range_mm, non_metal_ids, config.fov_mm)
            if _fits(prim, config.fov_mm):
                prims.append(prim)
                break
        else:
            raise PlacementError(f"could not place object {k} after {config.max_attempts} attempts")
    return SceneSpec(config.fov_mm, tuple(prims), seed)


def insert_metals(scene, n_metals, seed, config=MetalConfig(), table=None):
    """Append ``n_metals`` metal primitives placed on background (air) only.

    A candidate is accepted when its shape, grown by one check-grid pixel,
    misses every existing primitive and its rasterized footprint on the
    check grid covers only air.
    """
    if not 0 <= n_metals <= config.max_metals:
        raise ValueError(f"n_metals must be in [0, {config.max_metals}]")
    if n_metals == 0:
        return scene
    table = table if table is not None else build_material_table()
    metal_ids = [m.id for m in table if m.is_metal]
    rng = np.random.default_rng(seed)
    n = config.check_pixels
    margin = scene.fov_mm / n
    occupied = rasterize_labels(scene, n).grid != 0
    x, y = pixel_centers(n, scene.fov_mm)
    xx, yy = np.meshgrid(x, y)
    prims = list(scene.primitives)
    shapes = [p.geometry() for p in prims]
    for k in range(n_metals):
        for _ in range(config.max_attempts):
            prim = _random_primitive(rng, config.shapes, config.size_range_mm, metal_ids, scene.fov_mm)
            if not _fits(prim, scene.fov_mm):
                continue
            g = prim.geometry()
            grown = g.buffer(margin)
            if any(grown.intersects(s) for s in shapes):
                continue
            footprint = prim.contains(xx, yy)
            if np.any(footprint & occupied):
                continue
            prims.append(prim)
            shapes.append(g)
            occupied |= footprint
            break
        else:
            raise PlacementError(f"could not place metal {k} on background after {config.max_attempts} attempts")
    return replace(scene, primitives=tuple(prims))


def rasterize_labels(scene, n_pixels):
    """Label each pixel with the last primitive containing its center."""
    if n_pixels < 2:
        raise ValueError("n_pixels must be >= 2")
    x, y = pixel_centers(n_pixels, scene.fov_mm)
    xx, yy = np.meshgrid(x, y)
    grid = np.zeros((n_pixels, n_pixels), dtype=np.int16)
    for prim in scene.primitives:
        grid[prim.contains(xx, yy)] = prim.material_id
    return LabelImage(grid, scene.fov_mm / n_pixels)


def _check_labels(labels, table):
    if labels.grid.size and (labels.grid.min() < 0 or labels.grid.max() >= len(table)):
        raise ValueError("label image references a material id not in the table")


def attenuation_at(labels, energy_kev, table):
    """Per-pixel mu (cm^-1) at one energy."""
    _check_labels(labels, table)
    lut = np.array([m.attenuation(energy_kev) for m in table], dtype=np.float64)
    return lut[labels.grid]


def metal_mask_image(labels, table):
    _check_labels(labels, table)
    is_metal = np.array([m.is_metal for m in table])
    return is_metal[labels.grid]
