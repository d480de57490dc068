"""Inverse design of dielectric-sphere metasurfaces from scattering targets.

Pipeline: a coupled-dipole forward solver produces (geometry, DSCS)
training pairs; a conditional denoising diffusion model learns to
generate geometries matching a target DSCS profile; a CMA-ES optimizer
provides the iterative-design baseline; the evaluation harness scores
both with the mean percentage error.
"""

from .geometry import (
    GridSpec,
    Metasurface,
    Sphere,
    decode,
    encode,
    validate,
)
from .scattering import AngleGrid, DscsProfile, Illumination, dscs
from .estimator import DiffusionDesigner

__all__ = [
    "GridSpec",
    "Metasurface",
    "Sphere",
    "decode",
    "encode",
    "validate",
    "AngleGrid",
    "DscsProfile",
    "Illumination",
    "dscs",
    "DiffusionDesigner",
]

__version__ = "0.1.0"
