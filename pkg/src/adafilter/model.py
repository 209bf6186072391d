"""Parameterized finite state-space models with noisy scalar observations.

A model couples a family of row-stochastic kernels indexed by points on a
finite parameter grid with a bounded observation map ``h`` and Gaussian
observation noise. The augmented form freezes the parameter as a second,
non-moving component of the chain, so Bayesian parameter learning becomes a
filtering problem on the product space.

Simulation is driven by the Philox substreams in :mod:`adafilter.rng`; a
trajectory is a pure function of (model, parameter index, horizon, seed).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng
from .errors import NonErgodicError
from .measures import DiscreteMeasure, FiniteKernel, _frozen_array, mixing_constant

MERGE_TOL = 1e-12


@dataclass(frozen=True)
class KernelFamily:
    """A kernel per point of a finite parameter grid, plus optional callables.

    ``param_grid`` has shape (grid size, parameter dimension); the parameter
    metric is Euclidean. ``kernel_fn`` (theta -> matrix) and ``derivative_fn``
    (theta -> per-coordinate derivative matrices) extend the family off the
    grid; they are optional and only consumed by derivative diagnostics.
    """

    param_grid: np.ndarray
    kernels: tuple[FiniteKernel, ...]
    kernel_fn: Callable[[np.ndarray], np.ndarray] | None = None
    derivative_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        grid = np.array(self.param_grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        if grid.ndim != 2 or grid.shape[0] < 1:
            raise ValueError("param_grid must be a non-empty vector of points")
        grid.flags.writeable = False
        object.__setattr__(self, "param_grid", grid)
        kernels = tuple(self.kernels)
        if len(kernels) != grid.shape[0]:
            raise ValueError("need exactly one kernel per grid point")
        sizes = {k.support_size for k in kernels}
        if len(sizes) != 1:
            raise ValueError("all kernels must share one support size")
        object.__setattr__(self, "kernels", kernels)
        if len(np.unique(grid, axis=0)) != grid.shape[0]:
            raise ValueError("grid points must be distinct")

    @property
    def size(self) -> int:
        return self.param_grid.shape[0]

    @property
    def param_dim(self) -> int:
        return self.param_grid.shape[1]

    @property
    def support_size(self) -> int:
        return self.kernels[0].support_size

    def param_distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.param_grid[i] - self.param_grid[j]))

    def neighborhood(self, center: int, radius: float) -> np.ndarray:
        """Indices of grid points within Euclidean distance ``radius`` of center."""
        d = np.linalg.norm(self.param_grid - self.param_grid[center], axis=1)
        return np.nonzero(d <= radius)[0]

    @classmethod
    def from_function(cls, grid, kernel_fn, derivative_fn=None) -> "KernelFamily":
        grid = np.asarray(grid, dtype=float)
        pts = grid if grid.ndim > 1 else grid[:, None]
        kernels = tuple(FiniteKernel(np.asarray(kernel_fn(p), dtype=float)) for p in pts)
        return cls(grid, kernels, kernel_fn=kernel_fn, derivative_fn=derivative_fn)

    @classmethod
    def affine(cls, base, coeffs, grid) -> "KernelFamily":
        """Family K(theta) = base + sum_i theta_i * coeffs[i], linear in theta."""
        base = np.asarray(base, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim == 2:
            coeffs = coeffs[None, :, :]

        def kernel_fn(theta):
            theta = np.atleast_1d(np.asarray(theta, dtype=float))
            return base + np.einsum("i,ijk->jk", theta, coeffs)

        def derivative_fn(theta):
            return coeffs.copy()

        return cls.from_function(grid, kernel_fn, derivative_fn)


@dataclass(frozen=True)
class ObservationModel:
    """Observation map h (one value per state) plus Gaussian noise level sigma."""

    h: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "h", _frozen_array(self.h))
        if self.h.ndim != 1:
            raise ValueError("h must be a 1-D vector of per-state values")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def support_size(self) -> int:
        return self.h.size

    def log_density(self, y: float, x: int) -> float:
        """log g(y - h(x)) for the Gaussian noise density g."""
        z = (y - self.h[x]) / self.sigma
        return float(-0.5 * z * z - np.log(self.sigma) - 0.5 * np.log(2.0 * np.pi))

    def density(self, y: float, x: int) -> float:
        return float(np.exp(self.log_density(y, x)))

    def log_likelihoods(self, y: float) -> np.ndarray:
        """Vector of log g(y - h(x)) over all states."""
        z = (y - self.h) / self.sigma
        return -0.5 * z * z - np.log(self.sigma) - 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Finite Gaussian mixture with a common scale: the limiting observation law."""

    means: np.ndarray
    weights: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen_array(self.means))
        object.__setattr__(self, "weights", _frozen_array(self.weights))
        if self.means.shape != self.weights.shape:
            raise ValueError("means and weights must align")


@dataclass(frozen=True)
class AugmentedModel:
    """Kernel family + parameter prior + observation model + initial state law."""

    family: KernelFamily
    prior: DiscreteMeasure
    obs: ObservationModel
    initial: DiscreteMeasure

    def __post_init__(self):
        if self.prior.support_size != self.family.size:
            raise ValueError("prior must live on the parameter grid")
        if self.initial.support_size != self.family.support_size:
            raise ValueError("initial must live on the state space")
        if self.obs.support_size != self.family.support_size:
            raise ValueError("observation map must have one value per state")
        for name, m in (("prior", self.prior), ("initial", self.initial)):
            if abs(m.total() - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a probability measure")

    def with_initial(self, initial: DiscreteMeasure) -> "AugmentedModel":
        return dataclasses.replace(self, initial=initial)

    def with_prior(self, prior: DiscreteMeasure) -> "AugmentedModel":
        return dataclasses.replace(self, prior=prior)


@dataclass(frozen=True)
class Trajectory:
    """A simulated path: hidden states X_1..X_n and observations Y_1..Y_n."""

    states: np.ndarray
    observations: np.ndarray
    true_param_index: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen_array(self.states, dtype=int))
        object.__setattr__(self, "observations", _frozen_array(self.observations))
        if self.states.shape != self.observations.shape:
            raise ValueError("states and observations must have equal length")


def stationary_dist(
    K: FiniteKernel,
    *,
    check_mixing: bool = True,
    tol: float = 1e-13,
    max_iter: int = 1_000_000,
) -> DiscreteMeasure:
    """Stationary law pi with pi K = pi, by power iteration.

    Under the mixing condition the iteration contracts at rate at most
    1 - eps**2, so convergence to ``tol`` in total variation is guaranteed.
    A non-mixing kernel raises :class:`NonErgodicError` unless
    ``check_mixing=False`` (diagnostics may want the fixed point anyway).
    """
    if check_mixing and not mixing_constant(K).is_mixing:
        raise NonErgodicError(
            "kernel is not mixing; pass check_mixing=False to force power iteration"
        )
    m = K.matrix
    w = np.full(K.support_size, 1.0 / K.support_size)
    for _ in range(max_iter):
        nxt = w @ m
        if np.abs(nxt - w).sum() < tol:
            return DiscreteMeasure(nxt / nxt.sum(), probability=True)
        w = nxt
    raise NonErgodicError(f"power iteration did not reach residual {tol}")


def _merge_close(values: np.ndarray, tol: float = MERGE_TOL):
    """Group indices of ``values`` whose entries coincide within ``tol``.

    Returns (sorted unique representatives, list of index arrays).
    """
    order = np.argsort(values)
    reps: list[float] = []
    groups: list[list[int]] = []
    for idx in order:
        v = values[idx]
        if reps and abs(v - reps[-1]) <= tol:
            groups[-1].append(int(idx))
        else:
            reps.append(float(v))
            groups.append([int(idx)])
    return np.array(reps), [np.array(g, dtype=int) for g in groups]


def state_pushforward(pi: DiscreteMeasure, obs: ObservationModel) -> DiscreteMeasure:
    """Push a state law through h, merging equal observation values."""
    reps, groups = _merge_close(obs.h)
    weights = np.array([pi.weights[g].sum() for g in groups])
    return DiscreteMeasure(weights, labels=reps, probability=pi.probability)


def nu_theta(K: FiniteKernel, obs: ObservationModel) -> GaussianMixtureSpec:
    """Limiting observation law: the stationary law pushed through h, then
    convolved with the noise. Components with equal means are merged, so the
    mixture is canonical and mixtures are comparable across parameters."""
    pi = stationary_dist(K)
    push = state_pushforward(pi, obs)
    return GaussianMixtureSpec(push.labels, push.weights, obs.sigma)


def identifiability_scan(
    family: KernelFamily, obs: ObservationModel, tol: float
) -> list[tuple[int, int]]:
    """Find grid pairs whose stationary observation push-forwards coincide.

    Two parameters are indistinguishable from data exactly when their
    stationary laws push through h to the same measure; the Gaussian
    convolution preserves that equivalence, so the scan compares the
    push-forwards directly. Returns all pairs (i, j), i < j, at
    total-variation distance below ``tol``; an empty list certifies
    grid-level identifiability at that tolerance.
    """
    reps, groups = _merge_close(obs.h)
    pushed = []
    for kernel in family.kernels:
        pi = stationary_dist(kernel)
        pushed.append(np.array([pi.weights[g].sum() for g in groups]))
    pairs = []
    for i in range(family.size):
        for j in range(i + 1, family.size):
            if np.abs(pushed[i] - pushed[j]).sum() < tol:
                pairs.append((i, j))
    return pairs


def simulate(model: AugmentedModel, true_param_index: int, n: int, seed: int) -> Trajectory:
    """Simulate n steps of the chain under one fixed parameter.

    Draw order (fixed, part of the reproducibility contract): n+1 uniforms
    from substream (seed, DOMAIN_TRAJECTORY) drive X_0 and the n transitions
    by inverse CDF, then n standard normals drive the observation noise.
    """
    if not 0 <= true_param_index < model.family.size:
        raise IndexError(f"parameter index {true_param_index} outside the grid")
    if n < 1:
        raise ValueError("horizon must be at least 1")
    kernel = model.family.kernels[true_param_index].matrix
    gen = rng.substream(seed, rng.DOMAIN_TRAJECTORY)
    us = gen.random(n + 1)
    z = gen.standard_normal(n)
    states = np.empty(n, dtype=int)
    x = int(rng.inverse_cdf_draw(model.initial.weights, us[0]))
    for k in range(n):
        x = int(rng.inverse_cdf_draw(kernel[x], us[k + 1]))
        states[k] = x
    observations = model.obs.h[states] + model.obs.sigma * z
    return Trajectory(states, observations, true_param_index, seed)


# ---------------------------------------------------------------------------
# Model spec files (JSON)
# ---------------------------------------------------------------------------

def _check_vector(obj, key, length, violations, *, normalized=False):
    vec = obj.get(key)
    if not isinstance(vec, list) or len(vec) != length:
        violations.append({"pointer": f"/{key}", "message": f"expected a list of {length} reals"})
        return None
    try:
        arr = np.asarray(vec, dtype=float)
    except (TypeError, ValueError):
        violations.append({"pointer": f"/{key}", "message": "entries must be numbers"})
        return None
    if normalized and abs(arr.sum() - 1.0) > 1e-9:
        violations.append({"pointer": f"/{key}", "message": f"must sum to 1, sums to {arr.sum()}"})
        return None
    if normalized and np.any(arr < 0):
        violations.append({"pointer": f"/{key}", "message": "entries must be nonnegative"})
        return None
    return arr


def validate_model_dict(obj: dict):
    """Build an AugmentedModel from a parsed model spec, collecting all violations.

    Returns (model or None, violations); each violation carries a JSON
    pointer to the offending field.
    """
    violations: list[dict] = []
    states = obj.get("states")
    if not isinstance(states, int) or states < 1:
        violations.append({"pointer": "/states", "message": "states must be a positive integer"})
        return None, violations

    h = _check_vector(obj, "h", states, violations)
    sigma = obj.get("sigma")
    if not isinstance(sigma, (int, float)) or not sigma > 0:
        violations.append({"pointer": "/sigma", "message": "sigma must be a positive number"})
        sigma = None

    grid_raw = obj.get("param_grid")
    grid = None
    if not isinstance(grid_raw, list) or not grid_raw:
        violations.append({"pointer": "/param_grid", "message": "param_grid must be a non-empty list"})
    else:
        try:
            grid = np.asarray(grid_raw, dtype=float)
            if grid.ndim == 1:
                grid = grid[:, None]
        except (TypeError, ValueError):
            violations.append({"pointer": "/param_grid", "message": "grid points must be numeric"})
        if grid is not None and len(np.unique(grid, axis=0)) != grid.shape[0]:
            violations.append({"pointer": "/param_grid", "message": "grid points must be distinct"})
            grid = None

    family = None
    if grid is not None:
        if "kernels" in obj:
            family = _family_from_matrices(obj["kernels"], grid, states, violations)
        elif "kernel_template" in obj:
            family = _family_from_template(obj["kernel_template"], grid, states, violations)
        else:
            violations.append({"pointer": "", "message": "need either kernels or kernel_template"})

    prior = None if grid is None else _check_vector(obj, "prior", grid.shape[0], violations, normalized=True)
    initial = _check_vector(obj, "initial", states, violations, normalized=True)

    if violations or family is None or h is None or prior is None or initial is None:
        return None, violations
    model = AugmentedModel(
        family=family,
        prior=DiscreteMeasure(prior, probability=True),
        obs=ObservationModel(h, float(sigma)),
        initial=DiscreteMeasure(initial, probability=True),
    )
    return model, []


def _family_from_matrices(raw, grid, states, violations):
    if not isinstance(raw, list) or len(raw) != grid.shape[0]:
        violations.append({"pointer": "/kernels", "message": "need one kernel per grid point"})
        return None
    kernels = []
    ok = True
    for g, mat in enumerate(raw):
        arr = np.asarray(mat, dtype=float)
        if arr.shape != (states, states):
            violations.append({"pointer": f"/kernels/{g}", "message": f"kernel must be {states}x{states}"})
            ok = False
            continue
        if np.any(arr < 0):
            violations.append({"pointer": f"/kernels/{g}", "message": "entries must be nonnegative"})
            ok = False
            continue
        rowsums = arr.sum(axis=1)
        bad = np.nonzero(np.abs(rowsums - 1.0) > 1e-9)[0]
        if bad.size:
            for r in bad:
                violations.append(
                    {"pointer": f"/kernels/{g}/{int(r)}", "message": f"row sums to {rowsums[r]}, not 1"}
                )
            ok = False
            continue
        kernels.append(FiniteKernel(arr))
    return KernelFamily(grid, tuple(kernels)) if ok else None


def _family_from_template(tpl, grid, states, violations):
    if not isinstance(tpl, dict) or tpl.get("name") != "affine":
        violations.append({"pointer": "/kernel_template/name", "message": "unknown template (supported: affine)"})
        return None
    base = np.asarray(tpl.get("base", []), dtype=float)
    coeffs = np.asarray(tpl.get("coeffs", []), dtype=float)
    if base.shape != (states, states):
        violations.append({"pointer": "/kernel_template/base", "message": f"base must be {states}x{states}"})
        return None
    if coeffs.ndim == 2:
        coeffs = coeffs[None, :, :]
    if coeffs.shape != (grid.shape[1], states, states):
        violations.append(
            {"pointer": "/kernel_template/coeffs", "message": "need one coefficient matrix per parameter coordinate"}
        )
        return None
    try:
        return KernelFamily.affine(base, coeffs, grid)
    except ValueError as exc:
        violations.append({"pointer": "/kernel_template", "message": str(exc)})
        return None


def load_model(path) -> AugmentedModel:
    """Load and validate a model spec file; raises ValueError listing violations."""
    with open(path) as fh:
        obj = json.load(fh)
    model, violations = validate_model_dict(obj)
    if model is None:
        lines = "; ".join(f"{v['pointer']}: {v['message']}" for v in violations)
        raise ValueError(f"invalid model file {path}: {lines}")
    return model
