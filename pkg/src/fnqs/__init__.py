"""Coupling-conditioned transformer wavefunctions for families of spin Hamiltonians."""

from .couplings import CouplingDistribution, sample_couplings
from .hamiltonians import (
    GeneralizedJ1J2Heisenberg,
    J1J2Heisenberg,
    J1J2J3Heisenberg,
    RandomTransverseFieldIsing,
    TransverseFieldIsing,
    local_energies,
    make_family,
)
from .lattice import LatticeGeometry, make_patches
from .sampler import SamplerConfig, run_chains
from .sr import SRConfig, optimize, sr_step
from .vit import ViTConfig, ViTWavefunction

__version__ = "0.1.0"

__all__ = [
    "CouplingDistribution",
    "GeneralizedJ1J2Heisenberg",
    "J1J2Heisenberg",
    "J1J2J3Heisenberg",
    "LatticeGeometry",
    "RandomTransverseFieldIsing",
    "SRConfig",
    "SamplerConfig",
    "TransverseFieldIsing",
    "ViTConfig",
    "ViTWavefunction",
    "local_energies",
    "make_family",
    "make_patches",
    "optimize",
    "run_chains",
    "sample_couplings",
    "sr_step",
]
