"""Proximal sampling with exact Fisher-information accounting.

Closed-form isotropic-Gaussian channel arithmetic, a 1-D quadrature
engine for smoothed densities, the proximal sampler with a
rejection-sampling backward step, and the finite-dimensional
optimization analogues, all wired to a certifying CLI.
"""

from .gaussian import (
    Heat,
    HeatPerturbed,
    HeatSLC,
    HeatSLCPoincare,
    IsoGaussian,
    OU,
    OuSLC,
    OuSLCPoincare,
    ProximalForward,
    ProxRate,
    evolve,
    fi_curve,
    fi_time_derivative,
    fisher_information,
    iteration_count,
    kl_divergence,
    kl_time_derivative,
    proximal_chain,
    proximal_step,
)
from .potentials import (
    ConvergenceError,
    QuadraticPotential,
    ScalarPotential,
    SmoothPotential,
    SpikeSpec,
    counterexample_potential,
    minimize,
    quadratic_potential,
    quartic_1d,
    spike_potential,
    spike_spec,
)
from .quadrature import (
    ChannelTrace,
    DensityHandle,
    EnvelopeViolation,
    EvalGrid,
    GapBoundError,
    GaussHermiteRule,
    NormalizationError,
    QuadratureError,
    QuadResult,
    TraceRow,
    convolved_handle,
    convolved_logdensity,
    counterexample_initial_slope,
    counterexample_trace,
    default_time_grid,
    fi_functional,
    gap_check,
    gauss_hermite,
    gaussian_handle,
    kl_functional,
    ou_trace_gaussian,
    perturbed_bound_check,
)
from .sampler import (
    AcceptanceExponentError,
    SamplerConfig,
    SamplerRun,
    TrialCapExceeded,
    chain_rng,
    expected_trials_bound,
    fi_certificate_gaussian,
    forward_step,
    rejection_kappa,
    rgo_sample,
    run_chain,
)
from .optim import ProxGradTrace, gradient_flow, prox_grad_run, prox_grad_step

__version__ = "0.1.0"
