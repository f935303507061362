"""Simulation and verification tools for superprocesses with dependent spatial motion.

The forward side is an interacting branching particle system driven by a
common noise; the dual side is a Kingman-type coalescent acting on functions.
Both estimate the same moments, which the harness compares statistically.
"""

from .dual import CoalescentPath, dual_moment_bound, estimate_dual_moment, sample_coalescent
from .forward import (
    BinaryCritical,
    CustomTableLaw,
    ForwardConfig,
    Lemma43Law,
    ParticleEnsemble,
    run_forward,
    simulate_replicates,
)
from .harness import duality_check, mass_check, rescale_transform, rescaling_experiment, rescaling_trend
from .kernels import KernelModel, model_from_spec, rho_eval, step_covariance
from .oracles import MomentEstimate, laplace_mass, sbm_moments, second_moment_quadrature

__version__ = "0.1.0"

__all__ = [
    "BinaryCritical",
    "CoalescentPath",
    "CustomTableLaw",
    "ForwardConfig",
    "KernelModel",
    "Lemma43Law",
    "MomentEstimate",
    "ParticleEnsemble",
    "dual_moment_bound",
    "duality_check",
    "estimate_dual_moment",
    "laplace_mass",
    "mass_check",
    "model_from_spec",
    "rescale_transform",
    "rescaling_experiment",
    "rescaling_trend",
    "rho_eval",
    "run_forward",
    "sample_coalescent",
    "sbm_moments",
    "second_moment_quadrature",
    "simulate_replicates",
    "step_covariance",
]
