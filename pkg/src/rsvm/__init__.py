"""Bayesian low-rank matrix reconstruction and completion.

Precision-matrix Gaussian priors with Schatten-s or log-determinant latent
potentials, fitted by evidence approximation / EM, plus a vector RVM and a
nuclear-norm solver as baselines and a seeded Monte-Carlo benchmark harness.
"""

from .baselines import (
    NuclearMinResult,
    RvmState,
    eps_from_noise,
    nuclear_min,
    rvm_fit,
    svt,
)
from .estimator import (
    EstimatorConfig,
    FitError,
    FitResult,
    PosteriorState,
    alpha_update_logdet,
    alpha_update_schatten,
    balance_precisions,
    fit,
    lmmse_update,
    log_marginal_likelihood,
    noise_update,
    objective,
)
from .harness import (
    EstimatorResult,
    ExperimentResult,
    ExperimentSpec,
    SpecError,
    add_noise,
    derive_point_spec,
    gen_lowrank,
    gen_measurement,
    load_spec,
    run_experiment,
    sweep,
    write_plot_svg,
    write_results_csv,
)
from .linalg import (
    NumericalError,
    kron,
    load_matrix_csv,
    mat_pow_sym,
    partial_trace_left,
    partial_trace_right,
    pd_solve,
    save_matrix_csv,
    sym_eig,
    unvec,
    vec,
)
from .penalties import (
    LogDetPenalty,
    NuclearPenalty,
    PenaltyKind,
    SchattenPenalty,
    conjugacy_check,
    conjugate_minimizers,
    latent_potential,
    penalty_value,
    schatten_potential_coeff,
    schatten_update_coeff,
)

__version__ = "0.1.0"
