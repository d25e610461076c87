"""Desk-scale numerical laboratory for interacting diffusions.

Three levels of description of the same system: the N-particle simulation
(:mod:`~meanfield_lab.dynamics`), the mean-field Fokker-Planck equation
(:mod:`~meanfield_lab.fokker_planck`), and measures over measures
(:mod:`~meanfield_lab.measures`), linked by exact 1D optimal transport
(:mod:`~meanfield_lab.transport`), free-energy functionals
(:mod:`~meanfield_lab.potentials`), and a pass/fail inequality harness
(:mod:`~meanfield_lab.checks`) driven by a CLI (:mod:`~meanfield_lab.cli`).
"""

from .measures import (
    DiscreteSymmetricMeasure,
    EmpiricalMeasure,
    GridDensity,
    MetaMeasure,
    ParticleEnsemble,
    derive_seed,
    discrete_empirical_pushforward,
    empirical_lift,
    exchangeable_from_tuples,
    gaussian_density,
    marginal,
    product_measure,
    sample_product,
    tensor_lift,
    uniform_density,
)
from .potentials import (
    EnergyReport,
    Potential,
    convexity_modulus_estimate,
    custom_potential,
    double_well,
    doubling_check,
    free_energy_meta,
    free_energy_mf,
    free_energy_product,
    hessian_quadratic_form,
    hessian_quadratic_form_fd,
    interaction_quadrature,
    quadratic,
    w_n,
    zero_potential,
)
from .transport import (
    IsometryResult,
    TransportPlan,
    isometry_gap,
    nested_d2,
    nested_d2_squared_to_dirac,
    solve_discrete_ot,
    w2_assignment,
    w2_quantile,
    w2_squared_quantile,
)
from .dynamics import SdeConfig, SimulationError, evolve, step, step_noise
from .fokker_planck import PdeConfig, StabilityError, ou_oracle, semigroup_step, solve
from .checks import (
    CheckResult,
    chaos_sweep,
    df_check,
    df_decomposition_coefficient,
    evi_lifted_check,
    evi_mf_check,
    evi_mf_check_ou_oracle,
    falling_factorial_ratio,
    gamma_check,
    gaussian_w2,
    isometry_check,
    ou_gaussian_free_energy,
    write_results_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
