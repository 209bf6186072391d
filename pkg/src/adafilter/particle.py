"""Interacting-particle approximation of the augmented filter.

Particles live on (state, parameter) pairs. The parameter component is
frozen, mirroring the product-kernel structure of the augmented system: a
particle propagates its state through its own parameter's kernel and its
parameter index never changes. The known consequence, that the occupied
parameter support can only shrink under resampling, is intentional; the
exact grid filter is the reference tool, and rejuvenation is out of scope.

Weights are kept in log space with max-subtraction. Systematic resampling
triggers when the effective sample size drops below ``ess_frac * N``.

Draw order per step (part of the reproducibility contract): from substream
(seed, DOMAIN_PF_STEP, step), N uniforms for state propagation, then one
uniform for systematic resampling if it triggers. Initialization uses
substream (seed, DOMAIN_PF_INIT): N uniforms for states, then N for
parameters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .measures import DiscreteMeasure
from .model import AugmentedModel


@dataclass(frozen=True)
class ParticleEnsemble:
    """Weighted particles on (state index, parameter index) pairs."""

    states: np.ndarray
    params: np.ndarray
    log_weights: np.ndarray
    step: int
    seed: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=int)
        params = np.asarray(self.params, dtype=int)
        logw = np.asarray(self.log_weights, dtype=float)
        if not (states.shape == params.shape == logw.shape) or states.ndim != 1:
            raise ValueError("states, params and log_weights must be equal-length vectors")
        if states.size < 1:
            raise ValueError("ensemble needs at least one particle")
        for arr in (states, params, logw):
            arr.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "log_weights", logw)

    @property
    def size(self) -> int:
        return self.states.size

    def normalized_weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def effective_sample_size(self) -> float:
        w = self.normalized_weights()
        return float(1.0 / np.sum(w * w))


def pf_init(model: AugmentedModel, N: int, seed: int) -> ParticleEnsemble:
    """N i.i.d. draws from initial x prior, uniform weights."""
    if N < 1:
        raise ValueError("particle count must be at least 1")
    gen = rng.substream(seed, rng.DOMAIN_PF_INIT)
    states = rng.inverse_cdf_draw(model.initial.weights, gen.random(N))
    params = rng.inverse_cdf_draw(model.prior.weights, gen.random(N))
    logw = np.full(N, -np.log(N))
    return ParticleEnsemble(states, params, logw, step=0, seed=seed)


def systematic_resample(weights: np.ndarray, u: float) -> np.ndarray:
    """Indices of a systematic resample from normalized weights, offset u."""
    N = weights.size
    positions = (np.arange(N) + u) / N
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right").clip(max=N - 1)


def pf_step(
    model: AugmentedModel,
    ens: ParticleEnsemble,
    y: float,
    *,
    ess_frac: float = 0.5,
) -> ParticleEnsemble:
    """Propagate each particle through its own kernel, reweight, maybe resample.

    The parameter component is never touched. Deterministic given
    (ens.seed, ens.step).
    """
    N = ens.size
    step = ens.step + 1
    gen = rng.substream(ens.seed, rng.DOMAIN_PF_STEP, step)

    cdfs = np.cumsum(
        np.stack([k.matrix for k in model.family.kernels]), axis=2
    )
    rows = cdfs[ens.params, ens.states]
    u = gen.random(N)
    new_states = (rows <= u[:, None]).sum(axis=1).clip(max=rows.shape[1] - 1)

    loglik = model.obs.log_likelihoods(y)
    logw = ens.log_weights + loglik[new_states]

    shifted = np.exp(logw - logw.max())
    norm = shifted / shifted.sum()
    ess = 1.0 / np.sum(norm * norm)
    params = ens.params
    if ess < ess_frac * N:
        idx = systematic_resample(norm, float(gen.random()))
        new_states = new_states[idx]
        params = params[idx]
        logw = np.full(N, -np.log(N))
    return ParticleEnsemble(new_states, params, logw, step=step, seed=ens.seed)


def pf_run(
    model: AugmentedModel,
    y: Sequence[float],
    N: int,
    seed: int,
    *,
    ess_frac: float = 0.5,
) -> list[ParticleEnsemble]:
    """Initialize and step through a whole observation sequence."""
    ens = pf_init(model, N, seed)
    out = []
    for yk in np.asarray(y, dtype=float):
        ens = pf_step(model, ens, float(yk), ess_frac=ess_frac)
        out.append(ens)
    return out


def pf_estimates(ens: ParticleEnsemble, model: AugmentedModel):
    """Weighted empirical marginals over state and parameter indices."""
    w = ens.normalized_weights()
    state_w = np.bincount(ens.states, weights=w, minlength=model.family.support_size)
    param_w = np.bincount(ens.params, weights=w, minlength=model.family.size)
    return (
        DiscreteMeasure(state_w / state_w.sum(), probability=True),
        DiscreteMeasure(param_w / param_w.sum(), probability=True),
    )


def dump_ensemble_csv(path, ensembles: Iterable[ParticleEnsemble]) -> None:
    """Write ensemble snapshots as CSV: step, particle_id, state, param_index, weight."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "particle_id", "state", "param_index", "weight"])
        for ens in ensembles:
            w = ens.normalized_weights()
            for i in range(ens.size):
                writer.writerow(
                    [ens.step, i, int(ens.states[i]), int(ens.params[i]), repr(float(w[i]))]
                )
