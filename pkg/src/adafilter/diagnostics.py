"""Stability and consistency diagnostics computed on exact filters.

Everything here consumes exact filter runs, never particle estimates, so
bound checks are not confounded by Monte Carlo noise. The main quantities:

* step errors: the one-step discrepancy created by running the filter with
  the wrong parameter at the last step only, in Hilbert and total-variation
  distance;
* the two uniform total-error bounds for mixing true kernels, with constants
  2/(eps^2 log 3) and 1 + 2/(eps^4 log 3);
* kernel derivatives in the parameter, the state-wise derivative-to-kernel
  ratio bound Lambda, and the per-step conditional-mean bound series whose
  uniform boundedness drives parameter-uniform continuity of the filter;
* posterior concentration of the parameter marginal around the true value,
  with an empirical tail decay rate;
* the stability gap between the parameter-averaged filter and the true-
  parameter filter started elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IdentifiabilityError,
    NotApplicableError,
    PreconditionError,
)
from .exact import (
    _logsumexp,
    _step_arrays,
    run_augmented_filter,
    run_filter,
    state_marginal,
)
from .measures import (
    DiscreteMeasure,
    FiniteKernel,
    hilbert_metric,
    mixing_constant,
    tv_norm,
)
from .model import AugmentedModel, KernelFamily, ObservationModel, identifiability_scan, simulate

TV_PER_HILBERT = 2.0 / math.log(3.0)


@dataclass(frozen=True)
class StepErrorSeries:
    """Per-step filter step errors for a (theta, alpha) pair.

    ``epsilon`` is the mixing constant of the true kernel K_alpha; 0 marks
    the bounds as not applicable. The cross inequality
    tv_n <= (2/log 3) * hilbert_n is a theorem and is enforced here (with
    floating-point slack); a violation indicates an implementation bug.
    """

    hilbert: np.ndarray
    tv: np.ndarray
    theta_index: int
    alpha_index: int
    epsilon: float

    def __post_init__(self):
        h = np.asarray(self.hilbert, dtype=float)
        t = np.asarray(self.tv, dtype=float)
        if h.shape != t.shape or h.ndim != 1:
            raise ValueError("hilbert and tv series must be equal-length vectors")
        if np.any(t < 0) or np.any(h < 0):
            raise ValueError("step errors must be nonnegative")
        finite = np.isfinite(h)
        if np.any(t[finite] > TV_PER_HILBERT * h[finite] + 1e-9):
            raise ValueError("tv step error exceeds (2/log 3) * hilbert step error")
        for arr in (h, t):
            arr.flags.writeable = False
        object.__setattr__(self, "hilbert", h)
        object.__setattr__(self, "tv", t)


@dataclass(frozen=True)
class BoundReport:
    """Uniform total-error bounds versus the observed supremum."""

    sup_total_error: float
    sup_step_h: float
    sup_step_tv: float
    bound_h: float
    bound_tv: float
    violations: int


@dataclass(frozen=True)
class KernelDerivative:
    """Per-coordinate derivative matrices of theta -> K_theta.

    Rows sum to zero (derivative of the row-stochastic constraint);
    ``one_sided`` flags a boundary grid point where only a one-sided
    difference was available.
    """

    matrices: np.ndarray
    one_sided: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim == 2:
            m = m[None, :, :]
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("matrices must have shape (coords, states, states)")
        if np.any(np.abs(m.sum(axis=2)) > 1e-8):
            raise ValueError("derivative rows must sum to 0 within 1e-8")
        m.flags.writeable = False
        object.__setattr__(self, "matrices", m)

    @property
    def param_dim(self) -> int:
        return self.matrices.shape[0]

    def directional(self, v) -> np.ndarray:
        """Derivative matrix in direction v (length = parameter dimension)."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return np.einsum("i,ijk->jk", v, self.matrices)


@dataclass(frozen=True)
class DerivativeBoundSeries:
    """Per-step bound factors of the mean-value step estimate.

    ``ratio`` is the tighter form Psi(|L g_n|) / Psi(K g_n); ``cond_mean`` is
    the conditional expectation of Lambda under the hybrid chain. Always
    ratio_n <= cond_mean_n <= max Lambda.
    """

    ratio: np.ndarray
    cond_mean: np.ndarray
    sup_ratio: float
    sup_cond_mean: float
    theta_index: int
    thetaprime_index: int


@dataclass(frozen=True)
class MomentProbeReport:
    """Power-mean moment statistics over a parameter neighborhood.

    ``values[a, b, k]`` is the statistic for theta = neighborhood[a],
    theta' = neighborhood[b] and n = horizons[k]; ``ceiling`` is the
    analytic cap max_x Lambda(x) over the neighborhood.
    """

    neighborhood: np.ndarray
    horizons: np.ndarray
    values: np.ndarray
    sup: float
    ceiling: float


@dataclass(frozen=True)
class ConsistencyReport:
    """Seed-averaged posterior mass outside a parameter neighborhood."""

    eta: float
    mass_outside: np.ndarray
    log_rate: float
    probe: dict | None = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.mass_outside, dtype=float)
        if np.any(m < 0) or np.any(m > 1):
            raise ValueError("mass_outside entries must lie in [0, 1]")
        m.flags.writeable = False
        object.__setattr__(self, "mass_outside", m)


def step_errors(
    family: KernelFamily,
    obs: ObservationModel,
    mu: DiscreteMeasure,
    theta_idx: int,
    alpha_idx: int,
    y,
) -> StepErrorSeries:
    """Hilbert and tv step errors of the theta-filter against the alpha step.

    At each n the one-step optimal kernel of the true parameter alpha is
    applied to Psi_{n-1}^theta and compared with Psi_n^theta, so the series
    isolates the error made by using the wrong parameter at the last step
    only. Distances are computed even when K_alpha is not mixing; in that
    case epsilon = 0 and the uniform bounds are not applicable.
    """
    k_theta = family.kernels[theta_idx].matrix
    k_alpha = family.kernels[alpha_idx].matrix
    y = np.asarray(y, dtype=float)
    eps = mixing_constant(family.kernels[alpha_idx]).epsilon
    h_err = np.empty(y.size)
    tv_err = np.empty(y.size)
    w = mu.weights
    for k, yk in enumerate(y):
        loglik = obs.log_likelihoods(yk)
        w_theta, _ = _step_arrays(k_theta, loglik, w)
        w_alpha, _ = _step_arrays(k_alpha, loglik, w)
        psi_theta = DiscreteMeasure(w_theta, probability=True)
        one_step = DiscreteMeasure(w_alpha, probability=True)
        h_err[k] = hilbert_metric(psi_theta, one_step)
        tv_err[k] = tv_norm(psi_theta, one_step)
        w = w_theta
    return StepErrorSeries(h_err, tv_err, theta_idx, alpha_idx, eps)


def total_error_series(
    family: KernelFamily,
    obs: ObservationModel,
    mu: DiscreteMeasure,
    theta_idx: int,
    alpha_idx: int,
    y,
) -> np.ndarray:
    """Per-step ||Psi_n^theta(mu) - Psi_n^alpha(mu)||_tv on shared observations."""
    theta_run = run_filter(family.kernels[theta_idx], obs, mu, y)
    alpha_run = run_filter(family.kernels[alpha_idx], obs, mu, y)
    return np.array([tv_norm(a.dist, b.dist) for a, b in zip(theta_run, alpha_run)])


def bound_check(series: StepErrorSeries, total_errors) -> BoundReport:
    """Check both uniform total-error bounds against an observed run.

    bound_h = 2/(eps^2 log 3) * sup step-Hilbert error and
    bound_tv = (1 + 2/(eps^4 log 3)) * sup step-tv error must dominate the
    supremum of the total error; slack 1e-9 absorbs floating point. Both
    bounds are theorems for mixing K_alpha, so any violation is a bug.
    """
    eps = series.epsilon
    if eps <= 0:
        raise NotApplicableError("total-error bounds require a mixing true kernel")
    totals = np.asarray(total_errors, dtype=float)
    sup_total = float(totals.max())
    sup_h = float(np.max(series.hilbert))
    sup_tv = float(np.max(series.tv))
    bound_h = 2.0 / (eps**2 * math.log(3.0)) * sup_h
    bound_tv = (1.0 + 2.0 / (eps**4 * math.log(3.0))) * sup_tv
    violations = int(sup_total > bound_h + 1e-9) + int(sup_total > bound_tv + 1e-9)
    return BoundReport(sup_total, sup_h, sup_tv, bound_h, bound_tv, violations)


def kernel_derivative(
    family: KernelFamily,
    theta_idx: int,
    h_fd: float = 1e-6,
    *,
    method: str = "auto",
) -> KernelDerivative:
    """Derivative of theta -> K_theta at a grid point.

    Prefers the family's analytic callback; otherwise central finite
    differences of the continuous kernel function with step ``h_fd``; as a
    last resort, differences of neighboring grid kernels (1-d grids only),
    one-sided at the boundary.
    """
    if h_fd <= 0:
        raise ValueError("h_fd must be positive")
    theta = family.param_grid[theta_idx]
    if method not in ("auto", "analytic", "fd", "grid"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "analytic") and family.derivative_fn is not None:
        return KernelDerivative(np.asarray(family.derivative_fn(theta), dtype=float))
    if method == "analytic":
        raise ValueError("family has no analytic derivative callback")
    if method in ("auto", "fd") and family.kernel_fn is not None:
        d = family.param_dim
        mats = np.empty((d, family.support_size, family.support_size))
        for i in range(d):
            e = np.zeros(d)
            e[i] = h_fd
            mats[i] = (
                np.asarray(family.kernel_fn(theta + e), dtype=float)
                - np.asarray(family.kernel_fn(theta - e), dtype=float)
            ) / (2.0 * h_fd)
        return KernelDerivative(mats)
    if method == "fd":
        raise ValueError("family has no continuous kernel function")
    if family.param_dim != 1:
        raise ValueError("grid-difference derivatives need a 1-d parameter grid")
    order = np.argsort(family.param_grid[:, 0])
    pos = int(np.nonzero(order == theta_idx)[0][0])
    lo = order[pos - 1] if pos > 0 else None
    hi = order[pos + 1] if pos + 1 < family.size else None
    if lo is None and hi is None:
        raise ValueError("singleton grid admits no difference derivative")
    a = theta_idx if lo is None else lo
    b = theta_idx if hi is None else hi
    gap = family.param_grid[b, 0] - family.param_grid[a, 0]
    mat = (family.kernels[b].matrix - family.kernels[a].matrix) / gap
    return KernelDerivative(mat[None, :, :], one_sided=(lo is None or hi is None))


def lambda_bound(deriv, kernel: FiniteKernel, direction=None) -> np.ndarray:
    """State-wise ratio bound Lambda(x) = max_x' |L(x', x)| / K(x', x).

    0/0 counts as 0; a positive derivative over a zero kernel entry makes
    Lambda(x) infinite, which is a valid in-band result (the bound is then
    "not well defined" and downstream diagnostics refuse to run).
    """
    if isinstance(deriv, KernelDerivative):
        if deriv.param_dim == 1:
            L = deriv.matrices[0]
        elif direction is not None:
            L = deriv.directional(direction)
        else:
            raise ValueError("multi-coordinate derivative needs a direction")
    else:
        L = np.asarray(deriv, dtype=float)
    num = np.abs(L)
    den = kernel.matrix
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    ratio[num == 0.0] = 0.0
    return ratio.max(axis=0)


def derivative_bound_series(
    model: AugmentedModel,
    theta_idx: int,
    thetaprime_idx: int,
    y,
    *,
    h_fd: float = 1e-6,
) -> DerivativeBoundSeries:
    """Per-step mean-value bound factors along an observation sequence.

    For each n, with Psi_{n-1} the theta-filter one step earlier and
    g_n = g(y_n - h(.)):

    * ratio_n   = Psi_{n-1}(|L| g_n) / Psi_{n-1}(K g_n)  (tighter), where
      |L| is the total-variation measure of the signed derivative kernel,
      i.e. (|L| g)(x') = sum_x |L(x', x)| g(x); the signed integral would
      cancel and fail to dominate the mean-value derivative,
    * cond_mean_n = Psi_{n-1}(K (Lambda g_n)) / Psi_{n-1}(K g_n), the
      conditional mean of Lambda(X_n) under the hybrid chain that switches
      to theta' at the last step.

    The running suprema are the quantities whose uniform boundedness yields
    parameter-uniform continuity of the filter.
    """
    family, obs = model.family, model.obs
    deriv = kernel_derivative(family, thetaprime_idx, h_fd)
    K_tp = family.kernels[thetaprime_idx]
    lam = lambda_bound(deriv, K_tp)
    if not np.all(np.isfinite(lam)):
        raise NotApplicableError("Lambda is infinite: derivative not dominated by kernel")
    L = deriv.matrices[0] if deriv.param_dim == 1 else deriv.directional(
        family.param_grid[theta_idx] - family.param_grid[thetaprime_idx]
    )
    y = np.asarray(y, dtype=float)
    k_theta = family.kernels[theta_idx].matrix
    abs_L = np.abs(L)
    ratio = np.empty(y.size)
    cond = np.empty(y.size)
    w = model.initial.weights
    for k, yk in enumerate(y):
        loglik = obs.log_likelihoods(yk)
        gn = np.exp(loglik - loglik.max())  # common factor cancels in ratios
        denom = float(w @ (K_tp.matrix @ gn))
        ratio[k] = float(w @ (abs_L @ gn)) / denom
        cond[k] = float(w @ (K_tp.matrix @ (lam * gn))) / denom
        w, _ = _step_arrays(k_theta, loglik, w)
    return DerivativeBoundSeries(
        ratio,
        cond,
        float(ratio.max()),
        float(cond.max()),
        theta_idx,
        thetaprime_idx,
    )


def moment_condition_probe(
    model: AugmentedModel,
    alpha_idx: int,
    radius: float,
    horizons,
    *,
    h_fd: float = 1e-6,
) -> MomentProbeReport:
    """Power-mean moments of Lambda over a grid neighborhood of alpha.

    For theta, theta' within ``radius`` of alpha and each horizon n, computes
    ( sum_x (mu K_theta^n)(x) * (K_theta' Lambda^{n+1})(x) )^{1/(n+1)}
    exactly via matrix powers, in log space so large powers never overflow.
    The uniform-in-n boundedness of this statistic is the checkable
    sufficient condition for filter continuity in the parameter.
    """
    family = model.family
    nbhd = family.neighborhood(alpha_idx, radius)
    horizons = np.asarray(horizons, dtype=int)
    if horizons.size == 0 or np.any(horizons < 1):
        raise ValueError("horizons must be positive integers")
    wanted = set(horizons.tolist())
    lams = {}
    for b in nbhd:
        lam = lambda_bound(kernel_derivative(family, int(b), h_fd), family.kernels[int(b)])
        if not np.all(np.isfinite(lam)):
            raise NotApplicableError("Lambda is infinite on the neighborhood")
        lams[int(b)] = lam
    values = np.empty((nbhd.size, nbhd.size, horizons.size))
    with np.errstate(divide="ignore"):
        log_kernels = {int(b): np.log(family.kernels[int(b)].matrix) for b in nbhd}
        log_lams = {int(b): np.log(lams[int(b)]) for b in nbhd}
    for ai, a in enumerate(nbhd):
        k_theta = family.kernels[int(a)].matrix
        dist = model.initial.weights
        dists = {}
        horizon_max = int(horizons.max())
        for n in range(1, horizon_max + 1):
            dist = dist @ k_theta
            if n in wanted:
                dists[n] = dist.copy()
        for bi, b in enumerate(nbhd):
            for ni, n in enumerate(horizons):
                # log (K_theta' Lambda^{n+1})(x) per state x
                inner = log_kernels[int(b)] + (n + 1) * log_lams[int(b)][None, :]
                m = inner.max(axis=1, keepdims=True)
                safe_m = np.where(np.isfinite(m), m, 0.0)
                log_klam = (safe_m[:, 0] + np.log(np.exp(inner - safe_m).sum(axis=1)))
                with np.errstate(divide="ignore"):
                    terms = np.log(dists[int(n)]) + log_klam
                log_moment = _logsumexp(terms)
                values[ai, bi, ni] = (
                    0.0 if log_moment == -np.inf else math.exp(log_moment / (n + 1))
                )
    ceiling = max(float(lams[int(b)].max()) for b in nbhd)
    return MomentProbeReport(nbhd, horizons, values, float(values.max()), ceiling)


def posterior_concentration(
    model: AugmentedModel,
    alpha_idx: int,
    eta: float,
    n: int,
    seeds,
    *,
    rate_window: float = 0.5,
    ident_tol: float = 1e-6,
    include_probe: bool = False,
    epsilon_n=None,
    p_n=None,
) -> ConsistencyReport:
    """Seed-averaged posterior mass outside the eta-ball around alpha.

    Simulates under alpha, runs the augmented filter, records
    Z_n({d(theta, alpha) >= eta}) per step (log-space, so deep concentration
    does not underflow), averages across seeds, and fits the tail-window
    slope of log mass versus step as the empirical decay rate.

    The optional probe reports the Holder-style prior statistic
    mean[(sup_{theta in N_{eps_n}} dQ_alpha/dQ_theta / u(N_{eps_n}))^{1/p(n)}]
    with the atom-prior defaults eps_n = 0 and p(n) = n.
    """
    if not 0 <= alpha_idx < model.family.size:
        raise IndexError(f"alpha index {alpha_idx} outside the grid")
    pairs = identifiability_scan(model.family, model.obs, ident_tol)
    if pairs:
        raise IdentifiabilityError(f"equivalent grid pairs at tol {ident_tol}: {pairs}")
    if model.prior.weights[alpha_idx] <= 0:
        raise PreconditionError("prior must put positive mass on the true grid cell")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    d = np.linalg.norm(model.family.param_grid - model.family.param_grid[alpha_idx], axis=1)
    outside = np.nonzero(d >= eta)[0]

    if include_probe:
        epsilon_n = np.zeros(n) if epsilon_n is None else np.asarray(epsilon_n, dtype=float)
        p_n = np.arange(1, n + 1, dtype=float) if p_n is None else np.asarray(p_n, dtype=float)
        probe_sum = np.zeros(n)

    masses = np.zeros(n)
    for seed in seeds:
        traj = simulate(model, alpha_idx, n, seed)
        states = run_augmented_filter(model, traj.observations)
        for k, st in enumerate(states):
            logw = st.param_log_weights
            total = _logsumexp(logw)
            out_mass = (
                0.0 if outside.size == 0 else math.exp(_logsumexp(logw[outside]) - total)
            )
            masses[k] += min(1.0, out_mass)
            if include_probe:
                ball = np.nonzero(d <= epsilon_n[k])[0]
                log_z_alpha = st.per_param[alpha_idx].log_normalizer
                sup_ratio = max(
                    log_z_alpha - st.per_param[int(b)].log_normalizer for b in ball
                )
                u_ball = float(model.prior.weights[ball].sum())
                probe_sum[k] += math.exp((sup_ratio - math.log(u_ball)) / p_n[k])
    masses /= len(seeds)

    start = int(n * (1.0 - rate_window))
    steps = np.arange(start + 1, n + 1, dtype=float)
    tail = masses[start:]
    if np.all(tail == 0.0):
        log_rate = -math.inf
    else:
        log_rate = float(np.polyfit(steps, np.log(np.maximum(tail, 1e-300)), 1)[0])

    probe = None
    if include_probe:
        probe = {
            "epsilon_n": epsilon_n.tolist(),
            "p_n": p_n.tolist(),
            "statistic": (probe_sum / len(seeds)).tolist(),
            "description": "Holder prior statistic; defaults are the atom case eps=0, p(n)=n",
        }
    return ConsistencyReport(eta, masses, log_rate, probe)


def stability_gap(
    model_u: AugmentedModel,
    model_alpha: AugmentedModel,
    mu: DiscreteMeasure,
    mu_prime: DiscreteMeasure,
    y,
) -> np.ndarray:
    """Per-step tv distance between two augmented state marginals.

    ``model_u`` (typically a diffuse prior) starts at ``mu``; ``model_alpha``
    (typically a point prior at the true parameter) starts at ``mu_prime``.
    Both consume the same observation sequence, which should be generated
    under the true parameter for the self-correction statement to apply.
    """
    if model_u.family.support_size != model_alpha.family.support_size:
        raise PreconditionError("models must share the state space")
    su = run_augmented_filter(model_u.with_initial(mu), y)
    sa = run_augmented_filter(model_alpha.with_initial(mu_prime), y)
    return np.array(
        [tv_norm(state_marginal(a), state_marginal(b)) for a, b in zip(su, sa)]
    )
