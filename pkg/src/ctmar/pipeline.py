"""End-to-end orchestration: scene simulation, dataset generation and MAR runs."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis, rng
from .containers import read_mask, read_sinogram, write_mask, write_sinogram
from .learned import infer
from .mar_classical import li_mar, wnn_mar
from .physics import measure
from .projector import apply_mask, crop_array, pad_array, project_array, project_metal_mask
from .recon import fbp, reinsert_metal, segment_metal
from .scene import (
    PlacementError,
    SceneSpec,
    build_material_table,
    insert_metals,
    metal_mask_image,
    rasterize_labels,
    sample_scene,
    save_material_table,
)

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
METHODS = ("none", "li", "wnn", "learned")

# key streams for per-scene seeds
_SCENE, _METAL_COUNT, _METALS, _NOISE = 1, 2, 3, 4


def line_integral_stack(labels, table, energies, geometry, threads=1):
    """Per-energy line integrals, built from one projection per material."""
    stack = np.zeros((len(energies), *geometry.shape))
    for mid in np.unique(labels.grid):
        if mid == 0:
            continue
        path_cm = project_array((labels.grid == mid).astype(np.float64), geometry, threads)
        mu = table[mid].attenuation(energies)
        stack += mu[:, None, None] * path_cm[None]
    return stack


@dataclass
class SimulatedScan:
    measurement: object  # Sinogram
    labels: object  # LabelImage
    metal_mask: np.ndarray


def simulate_scene(scene, run_config, noise_seed, table=None, threads=1):
    """Poly-energetic noisy measurement of ``scene`` under ``run_config``."""
    table = table if table is not None else build_material_table()
    geometry = run_config.geometry
    spectrum = run_config.spectrum()
    labels = rasterize_labels(scene, run_config.grid)
    stack = line_integral_stack(labels, table, spectrum.energies, geometry, threads)
    sino = measure(stack, spectrum, run_config.detector(), run_config.noise(noise_seed), geometry)
    return SimulatedScan(sino, labels, metal_mask_image(labels, table))


def scene_seeds(seed, index):
    """Independent integer seeds for one dataset scene."""
    words = rng.hash_keys(seed, index, np.arange(1, 5))
    return {k: int(w) for k, w in zip((_SCENE, _METAL_COUNT, _METALS, _NOISE), words)}


@dataclass
class ScenePair:
    index: int
    scene: SceneSpec
    reference: object  # Sinogram, metal-free
    mask: np.ndarray  # sinogram metal trace
    image_mask: np.ndarray

    @property
    def incomplete(self):
        return apply_mask(self.reference, self.mask)


def make_pair(index, run_config, seed, max_metals, table=None, threads=1):
    """One training pair: metal-free reference plus the oracle trace of inserted metals."""
    table = table if table is not None else build_material_table()
    seeds = scene_seeds(seed, index)
    try:
        base = sample_scene(run_config.scene_config(), seeds[_SCENE], table)
        n_metals = 1 + int(rng.hash_keys(seeds[_METAL_COUNT]) % np.uint64(max_metals))
        metal_cfg = replace(run_config.metal_config(), max_metals=max(max_metals, run_config.max_metals))
        with_metal = insert_metals(base, n_metals, seeds[_METALS], metal_cfg, table)
    except PlacementError as e:
        raise PlacementError(f"scene {index}: {e}") from None
    reference = simulate_scene(base, run_config, seeds[_NOISE], table, threads).measurement
    image_mask = metal_mask_image(rasterize_labels(with_metal, run_config.grid), table)
    mask = project_metal_mask(image_mask, run_config.geometry, run_config.mask_dilation, threads)
    return ScenePair(index, with_metal, reference, mask, image_mask)


@dataclass
class DatasetManifest:
    version: int
    seed: int
    geometry: dict
    run_config: dict
    spectrum_file: str
    detector_file: str
    materials_file: str
    entries: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _entry_files(index, flipped):
    tag = f"{index:05d}" + ("f" if flipped else "")
    return {
        "scene_file": f"scenes/{index:05d}.json",
        "reference_sinogram": f"ref/{tag}.sino",
        "incomplete_sinogram": f"inc/{tag}.sino",
        "sinogram_mask": f"mask/{tag}.mask",
        "image_metal_mask": f"imgmask/{tag}.mask",
        "flip_flag": flipped,
    }


def _write_pair(out, pair, flipped, geometry):
    files = _entry_files(pair.index, flipped)
    ref = pair.reference
    mask, image_mask = pair.mask, pair.image_mask
    if flipped:
        # reversing the detector axis at every angle is the scan of the
        # object rotated by 180 degrees
        ref = type(ref)(ref.values[:, ::-1].copy(), ref.unit, ref.geometry)
        mask = mask[:, ::-1].copy()
        image_mask = np.rot90(image_mask, 2).copy()
    else:
        (out / files["scene_file"]).write_text(json.dumps(pair.scene.to_dict(), sort_keys=True, indent=1) + "\n")
    write_sinogram(out / files["reference_sinogram"], ref)
    write_sinogram(out / files["incomplete_sinogram"], apply_mask(ref, mask))
    write_mask(out / files["sinogram_mask"], mask, geometry)
    write_mask(out / files["image_metal_mask"], image_mask)
    return files


def gen_dataset(n_scenes, out_dir, run_config, seed, max_metals=5, flips=False, threads=1, table=None):
    """Simulate ``n_scenes`` training pairs into ``out_dir`` and write ``manifest.json``.

    Scenes are simulated in parallel; each scene only depends on
    ``(seed, index)``, so the output does not depend on ``threads``.
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    if max_metals < 1:
        raise ValueError("max_metals must be >= 1")
    out = Path(out_dir)
    for sub in ("scenes", "ref", "inc", "mask", "imgmask"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    table = table if table is not None else build_material_table()
    geometry = run_config.geometry
    save_material_table(table, out / "materials.json")
    (out / "spectrum.json").write_text(json.dumps(run_config.spectrum().to_dict(), indent=1) + "\n")
    (out / "detector.json").write_text(json.dumps(run_config.detector().to_dict(), indent=1) + "\n")

    def work(i):
        return make_pair(i, run_config, seed, max_metals, table)

    entries = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        # map yields in index order, so files are written in a fixed order
        for pair in ex.map(work, range(n_scenes)):
            entries.append(_write_pair(out, pair, False, geometry))
            if flips:
                entries.append(_write_pair(out, pair, True, geometry))
    manifest = DatasetManifest(
        MANIFEST_VERSION,
        int(seed),
        geometry.to_dict(),
        run_config.to_dict(),
        "spectrum.json",
        "detector.json",
        "materials.json",
        entries,
    )
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=1) + "\n")
    return manifest


def read_manifest(dataset_dir):
    return DatasetManifest.from_dict(json.loads((Path(dataset_dir) / "manifest.json").read_text()))


@dataclass
class Dataset:
    x: np.ndarray  # incomplete sinograms (n, H, W), padded to the network shape
    y: np.ndarray
    mask: np.ndarray
    manifest: DatasetManifest
    native_shape: tuple


def load_dataset(dataset_dir, network_shape=None):
    """All pairs of a dataset as stacked arrays, zero-padded to ``network_shape``."""
    root = Path(dataset_dir)
    manifest = read_manifest(root)
    xs, ys, ms = [], [], []
    native = None
    for e in manifest.entries:
        ref = read_sinogram(root / e["reference_sinogram"])
        inc = read_sinogram(root / e["incomplete_sinogram"])
        m = read_mask(root / e["sinogram_mask"])
        native = ref.values.shape
        target = network_shape or native
        xs.append(pad_array(inc.values, target))
        ys.append(pad_array(ref.values, target))
        ms.append(pad_array(m, target))
    if not xs:
        raise ValueError(f"{dataset_dir}: manifest has no entries")
    return Dataset(np.stack(xs), np.stack(ys), np.stack(ms), manifest, native)


def learned_completer(generator, network_shape=None):
    """(x, M) -> completed sinogram using ``generator``; pads/crops around the network."""

    def complete(x, mask):
        x = np.asarray(x, dtype=np.float32)
        shape = x.shape
        target = tuple(network_shape or generator.input_hw)
        out = infer(pad_array(x, target), pad_array(np.asarray(mask, dtype=bool), target), generator)
        return crop_array(out, shape)

    return complete


def completer_for(method, generator=None, network_shape=None, wnn_config=None):
    if method == "li":
        return li_mar
    if method == "wnn":
        return (lambda x, m: wnn_mar(x, m, wnn_config)) if wnn_config else wnn_mar
    if method == "learned":
        if generator is None:
            raise ValueError("method 'learned' needs a generator checkpoint")
        return learned_completer(generator, network_shape)
    if method == "none":
        return lambda x, m: np.asarray(x)
    raise ValueError(f"unknown MAR method {method!r}; choose from {METHODS}")


@dataclass
class MarResult:
    completed: object  # Sinogram
    recon: object  # ReconImage
    uncorrected: object
    sinogram_mask: np.ndarray
    image_mask: np.ndarray
    metrics: dict


def run_mar(sinogram, method, run_config, generator=None, oracle_mask=None, reference=None, threads=1):
    """FBP, segment (or oracle), project mask, delete, complete, FBP, reinsert metal.

    ``reference`` is an optional metal-free sinogram for error metrics.
    """
    if method not in METHODS:
        raise ValueError(f"unknown MAR method {method!r}; choose from {METHODS}")
    geometry = run_config.geometry
    if sinogram.values.shape != geometry.shape:
        raise ValueError(f"sinogram shape {sinogram.values.shape} does not match geometry {geometry.shape}")
    if method == "learned":
        if generator is None:
            raise ValueError("method 'learned' needs a generator checkpoint")
        if tuple(generator.input_hw) != tuple(run_config.network_shape):
            raise ValueError(
                f"checkpoint input {tuple(generator.input_hw)} does not match network shape {run_config.network_shape}"
            )
    fbp_cfg = run_config.fbp_config()
    uncorrected = fbp(sinogram, geometry, fbp_cfg, threads, "uncorrected")
    if oracle_mask is not None:
        image_mask = np.asarray(oracle_mask, dtype=bool)
        if image_mask.shape != uncorrected.values.shape:
            raise ValueError(f"oracle mask shape {image_mask.shape} does not match image {uncorrected.values.shape}")
    else:
        image_mask = segment_metal(uncorrected)
    sino_mask = project_metal_mask(image_mask, geometry, run_config.mask_dilation, threads)
    if method == "none":
        completed, recon = sinogram, uncorrected
    else:
        incomplete = apply_mask(sinogram, sino_mask)
        complete = completer_for(method, generator, run_config.network_shape)
        values = complete(incomplete.values, sino_mask)
        completed = type(sinogram)(values, sinogram.unit, sinogram.geometry)
        corrected = fbp(completed, geometry, fbp_cfg, threads, method)
        recon = reinsert_metal(corrected, image_mask, uncorrected)
    metrics = {}
    if reference is not None:
        metrics["sinogram_mse"] = analysis.mse(completed, reference)
        if sino_mask.any():
            metrics["masked_sinogram_mse"] = analysis.masked_mse(completed, reference, sino_mask)
    return MarResult(completed, recon, uncorrected, sino_mask, image_mask, metrics)
