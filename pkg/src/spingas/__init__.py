"""Low-density-limit and collision-model master equations for a spin in a dilute gas."""
from .cm import CmCoefficients, cm_c1, cm_c2, cm_c2_logkernel, cm_refracted
from .colsim import EnsembleResult, SimConfig, effective_tau_sample, run_ensemble, total_collision_rate
from .compare import ComparisonRecord, discrepancy_estimates, temperature_sweep
from .ldl import (
    LdlCoefficients,
    gamma_quadrature,
    gamma_squarewell_interpolated,
    kernel_K,
    lamb_shift_ldl,
)
from .liouville import GkslGenerator, build_generator, dissipator_apply, evolve
from .model import DensityMatrix, GasParameters, SpinModel, UnitSystem, jump_operators, maxwell_boltzmann_pdf
from .potentials import RadialPotential, born_amplitude, line_integral

__version__ = "0.1.0"

__all__ = [
    "CmCoefficients", "ComparisonRecord", "DensityMatrix", "EnsembleResult", "GasParameters",
    "GkslGenerator", "LdlCoefficients", "RadialPotential", "SimConfig", "SpinModel", "UnitSystem",
    "born_amplitude", "build_generator", "cm_c1", "cm_c2", "cm_c2_logkernel", "cm_refracted",
    "discrepancy_estimates", "dissipator_apply", "effective_tau_sample", "evolve", "gamma_quadrature",
    "gamma_squarewell_interpolated", "jump_operators", "kernel_K", "lamb_shift_ldl", "line_integral",
    "maxwell_boltzmann_pdf", "run_ensemble", "temperature_sweep", "total_collision_rate",
]
