"""Numerical laboratory for interacting-particle Langevin measures.

Submodules:

* :mod:`mflab.measure`   -- grid/Gaussian/empirical measures, divergences
* :mod:`mflab.model`     -- mean-field energies and their variations
* :mod:`mflab.sampler`   -- MALA for Gibbs targets, Euler-Maruyama dynamics
* :mod:`mflab.meanfield` -- self-consistent proximal Gibbs systems
* :mod:`mflab.chaos`     -- KL estimates vs closed-form chaos bounds
* :mod:`mflab.heatflow`  -- tilt profiles, OU flow, reverse transport maps
* :mod:`mflab.bounds`    -- exact calculators for every closed-form constant
* :mod:`mflab.cli`       -- experiment runner and report generation
"""

__version__ = "0.1.0"

from .bounds import (
    BoundInputs,
    heatflow_lipschitz_bound,
    lsi_pert_bound,
    lsi_pi_bound,
    main_bound,
    rescale_parameters,
    songbo_bound,
    winf_bound,
)
from .chaos import (
    ChaosReport,
    McmcConfig,
    bregman_divergence,
    chaos_sweep,
    estimate_kl,
    poc_bound,
)
from .heatflow import (
    CovarianceProfile,
    FlowMap,
    covariance_profile,
    lipschitz_estimate,
    ou_evolve,
    reverse_flow_map,
    tilted_measure,
)
from .meanfield import ProximalGibbsSystem, proximal_residual, solve_self_consistent
from .measure import (
    Axis,
    EmpiricalMeasure,
    GaussianMeasure,
    GridDensity,
    covariance_opnorm,
    kl_divergence,
    normalize_from_log_potential,
    w2_distance_1d,
)
from .model import (
    ModelSpec,
    energy,
    example_nn,
    first_variation,
    model_constants,
    quadratic_oracle,
    rescale_model,
    second_variation,
    wasserstein_gradient,
    zero_model,
)
from .sampler import (
    ParticleState,
    TargetSpec,
    TiltSpec,
    mala_sample,
    mfld_simulate,
    n_particle_log_density,
    n_particle_log_density_grad,
)
