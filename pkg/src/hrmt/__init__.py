"""Ultrametric and Rosenzweig-Porter random matrices: sampling, local spectral
statistics, Dyson Brownian motion stability, and a deterministic experiment
harness."""

from .ensemble import (EnsembleConfig, Hamiltonian, IndexSpace, PotentialSpec, RngStream, assemble,
                       hier_distance, normalization_Z, sample_phi, spread_M, variance_profile)
from .errors import (ConfigError, DomainError, EstimatorError, HrmtError, PrecisionError,
                     SolverError)
from .spectral import (ComplexEnergy, SpectralData, dos_measure, eigendecompose, green_function,
                       stieltjes)

__version__ = "0.1.0"

__all__ = [
    "EnsembleConfig", "Hamiltonian", "IndexSpace", "PotentialSpec", "RngStream", "assemble",
    "hier_distance", "normalization_Z", "sample_phi", "spread_M", "variance_profile",
    "ConfigError", "DomainError", "EstimatorError", "HrmtError", "PrecisionError", "SolverError",
    "ComplexEnergy", "SpectralData", "dos_measure", "eigendecompose", "green_function", "stieltjes",
]
