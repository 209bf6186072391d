"""Adaptive filtering for finite HMMs with unknown transition parameters.

The package couples exact and particle filters over a parameter-augmented
chain with the metric machinery (Hilbert projective metric, Birkhoff
contraction, mixing constants) needed to check filter stability and
posterior consistency numerically.
"""

__version__ = "0.1.0"

from .measures import (  # noqa: F401
    DiscreteMeasure,
    FiniteKernel,
    MixingCertificate,
    birkhoff_tau,
    empirical_measure,
    hilbert_metric,
    mixing_constant,
    prokhorov_distance,
    tv_norm,
)
from .model import (  # noqa: F401
    AugmentedModel,
    GaussianMixtureSpec,
    KernelFamily,
    ObservationModel,
    Trajectory,
    identifiability_scan,
    load_model,
    nu_theta,
    simulate,
    stationary_dist,
)
from .exact import (  # noqa: F401
    AugmentedFilterState,
    FilterState,
    filter_step,
    log_likelihood_ratio,
    param_posterior,
    run_augmented_filter,
    run_filter,
    state_marginal,
)
from .particle import (  # noqa: F401
    ParticleEnsemble,
    pf_estimates,
    pf_init,
    pf_run,
    pf_step,
)
from .diagnostics import (  # noqa: F401
    BoundReport,
    ConsistencyReport,
    KernelDerivative,
    StepErrorSeries,
    bound_check,
    derivative_bound_series,
    kernel_derivative,
    lambda_bound,
    moment_condition_probe,
    posterior_concentration,
    stability_gap,
    step_errors,
)
