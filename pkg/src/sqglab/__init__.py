"""Galerkin simulation of SQG and 2D Boussinesq equations with transport noise,
their deterministic dissipative limits, and scaling-limit experiments."""

__version__ = "0.1.0"

from .config import RunConfig, parse_config, render
from .dynamics import BrownianDriver, RecordingPlan, SdeConfig, simulate, simulate_batch
from .fields import SpectralScalarField, SpectralVectorField
from .lattice import Wavevector, basis_eval, lattice_points, sigma_eval
from .limit import DeterministicConfig, solve_boussinesq, solve_sqg, stability_gap
from .noise import NoiseCoefficients, make_cutoff, make_power, make_shell, scaling_ratio
from .scaling import EnsembleSpec, run_ensemble, run_scaling

__all__ = [
    "BrownianDriver", "DeterministicConfig", "EnsembleSpec", "NoiseCoefficients", "RecordingPlan", "RunConfig",
    "SdeConfig", "SpectralScalarField", "SpectralVectorField", "Wavevector", "basis_eval", "lattice_points",
    "make_cutoff", "make_power", "make_shell", "parse_config", "render", "run_ensemble", "run_scaling",
    "scaling_ratio", "sigma_eval", "simulate", "simulate_batch", "solve_boussinesq", "solve_sqg",
    "stability_gap",
]
