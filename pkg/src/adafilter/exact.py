"""Exact Bayes recursions for the filtering problem and its augmented form.

The per-parameter filter propagates a state law through the kernel, reweights
by the Gaussian observation likelihood, and renormalizes; the accumulated log
of the normalizing constants is the log observation-law density, so
differences of log-normalizers are exact log likelihood ratios between
models.

The augmented filter exploits the frozen-parameter structure: the product
kernel is block-diagonal over the grid, so a bank of per-parameter filters
plus log-weights reproduces the joint filter exactly. The parameter posterior
is the softmax of ``log prior + log normalizer`` and the state marginal is
the posterior-weighted mixture of the per-parameter filters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, InvalidPriorError
from .measures import DiscreteMeasure, FiniteKernel
from .model import AugmentedModel, ObservationModel

_UNDERFLOW_GUARD = 1e-300


@dataclass(frozen=True)
class FilterState:
    """State law given observations so far, plus accumulated log-normalizer."""

    dist: DiscreteMeasure
    log_normalizer: float


@dataclass(frozen=True)
class AugmentedFilterState:
    """Bank of per-parameter filters plus unnormalized parameter log-weights.

    ``param_log_weights[i]`` is log prior(i) + the i-th filter's
    log-normalizer; its softmax is the parameter posterior and
    ``per_param[i].dist`` is the state law conditional on grid point i.
    """

    per_param: tuple[FilterState, ...]
    param_log_weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.param_log_weights, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "param_log_weights", w)
        object.__setattr__(self, "per_param", tuple(self.per_param))
        if len(self.per_param) != w.size:
            raise ValueError("one filter state per grid point required")

    def joint_matrix(self) -> np.ndarray:
        """Joint law over (parameter, state) as a (grid, states) matrix."""
        z = param_posterior(self).weights
        dists = np.stack([fs.dist.weights for fs in self.per_param])
        return z[:, None] * dists

    def log_total_mass(self) -> float:
        """log of the total unnormalized mass sum_i exp(param_log_weights[i])."""
        return float(_logsumexp(self.param_log_weights))


def _logsumexp(logw: np.ndarray) -> float:
    m = np.max(logw)
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(logw - m).sum()))


def _step_arrays(matrix: np.ndarray, loglik: np.ndarray, w: np.ndarray):
    """One predict-update step on raw weight vectors.

    Returns (posterior weights, log-normalizer increment). Runs in direct
    space; falls back to log space when the weighted mass underflows below
    1e-300. The weighted mass cannot vanish for sigma > 0 since the Gaussian
    density is strictly positive.
    """
    predicted = w @ matrix
    weighted = predicted * np.exp(loglik)
    total = weighted.sum()
    if weighted.max() >= _UNDERFLOW_GUARD and np.isfinite(total):
        return weighted / total, float(np.log(total))
    with np.errstate(divide="ignore"):
        logw = np.log(predicted) + loglik
    m = float(np.max(logw))
    if m == -np.inf:
        raise RuntimeError("filter step lost all mass; predicted law is degenerate")
    shifted = np.exp(logw - m)
    total = shifted.sum()
    return shifted / total, m + float(np.log(total))


def filter_step(
    K: FiniteKernel, obs: ObservationModel, state: FilterState, y: float
) -> FilterState:
    """Advance the filter one step: predict through K, reweight by g(y - h)."""
    w, inc = _step_arrays(K.matrix, obs.log_likelihoods(y), state.dist.weights)
    return FilterState(
        DiscreteMeasure(w, probability=True), state.log_normalizer + inc
    )


def run_filter(
    K: FiniteKernel,
    obs: ObservationModel,
    initial: DiscreteMeasure,
    y: Sequence[float],
) -> list[FilterState]:
    """Filter laws after 1..n observations, starting from ``initial``."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EmptyInputError("run_filter needs at least one observation")
    if abs(initial.total() - 1.0) > 1e-9:
        raise ValueError("initial must be a probability measure")
    out = []
    w = initial.weights
    log_norm = 0.0
    for yk in y:
        w, inc = _step_arrays(K.matrix, obs.log_likelihoods(yk), w)
        log_norm += inc
        out.append(FilterState(DiscreteMeasure(w, probability=True), log_norm))
    return out


def run_augmented_filter(
    model: AugmentedModel, y: Sequence[float]
) -> list[AugmentedFilterState]:
    """Joint filter over (state, parameter) as a bank of per-parameter runs.

    The parameter component never moves, so each grid point evolves under its
    own kernel and the parameter log-weight is log prior + the accumulated
    log-normalizer. This is exact, not an approximation.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EmptyInputError("run_augmented_filter needs at least one observation")
    prior = model.prior.weights
    if prior.sum() <= 0:
        raise InvalidPriorError("prior has no mass anywhere on the grid")
    with np.errstate(divide="ignore"):
        log_prior = np.where(prior > 0, np.log(np.where(prior > 0, prior, 1.0)), -np.inf)
    logliks = np.stack([model.obs.log_likelihoods(yk) for yk in y])

    n, grid_size = y.size, model.family.size
    bank: list[list[FilterState]] = []
    for g in range(grid_size):
        matrix = model.family.kernels[g].matrix
        w = model.initial.weights
        log_norm = 0.0
        states = []
        for k in range(n):
            w, inc = _step_arrays(matrix, logliks[k], w)
            log_norm += inc
            states.append(FilterState(DiscreteMeasure(w, probability=True), log_norm))
        bank.append(states)

    out = []
    for k in range(n):
        per_param = tuple(bank[g][k] for g in range(grid_size))
        logw = log_prior + np.array([fs.log_normalizer for fs in per_param])
        out.append(AugmentedFilterState(per_param, logw))
    return out


def param_posterior(state: AugmentedFilterState) -> DiscreteMeasure:
    """Parameter posterior: max-subtracted softmax of the log-weights."""
    logw = state.param_log_weights
    m = np.max(logw)
    if m == -np.inf:
        raise InvalidPriorError("all parameter log-weights are -inf")
    w = np.exp(logw - m)
    return DiscreteMeasure(w / w.sum(), probability=True)


def state_marginal(state: AugmentedFilterState) -> DiscreteMeasure:
    """State marginal of the joint filter: posterior-weighted filter mixture."""
    z = param_posterior(state).weights
    dists = np.stack([fs.dist.weights for fs in state.per_param])
    return DiscreteMeasure(z @ dists, probability=True)


def log_likelihood_ratio(state_a: FilterState, state_b: FilterState) -> float:
    """log dQ_a/dQ_b at the shared observations: normalizer difference.

    Both states must come from the same observation sequence; that is the
    caller's responsibility.
    """
    return state_a.log_normalizer - state_b.log_normalizer


def dump_filter_csv(path, states: Sequence[AugmentedFilterState]) -> None:
    """Write the full filter history as CSV.

    Columns: step, param_index, state_index, weight, param_posterior,
    log_normalizer. Floats use shortest round-trip formatting so identical
    runs produce identical bytes.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["step", "param_index", "state_index", "weight", "param_posterior", "log_normalizer"]
        )
        for step, st in enumerate(states, start=1):
            z = param_posterior(st).weights
            for g, fs in enumerate(st.per_param):
                for j, wj in enumerate(fs.dist.weights):
                    writer.writerow(
                        [step, g, j, repr(float(wj)), repr(float(z[g])), repr(float(fs.log_normalizer))]
                    )
