"""Traveling-wave profiles and speeds for unbalanced gradient reaction-diffusion systems."""

__version__ = "0.1.0"

from .energy import Grid, Profile, energy, energy_gradient
from .potential import PotentialModel, build, make_planar_tilted, make_plateau_scalar, make_tilted_cubic
from .speed import SpeedResult, bisect_speed

__all__ = [
    "Grid", "Profile", "energy", "energy_gradient", "PotentialModel", "build", "make_planar_tilted",
    "make_plateau_scalar", "make_tilted_cubic", "SpeedResult", "bisect_speed", "__version__",
]
