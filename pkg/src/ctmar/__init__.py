"""CT metal artifact reduction: simulation, reconstruction and sinogram completion."""

from .config import PROFILES, RunConfig, load_run_config
from .projector import ScanGeometry, Sinogram, forward_project
from .recon import ReconImage, fbp

__version__ = "0.1.0"

__all__ = [
    "PROFILES",
    "ReconImage",
    "RunConfig",
    "ScanGeometry",
    "Sinogram",
    "fbp",
    "forward_project",
    "load_run_config",
]
