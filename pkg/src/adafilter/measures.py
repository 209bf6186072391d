"""Finite-support measures and the distances that drive filter-stability analysis.

The measures here are weight vectors on an indexed finite support, optionally
labeled with points on the observation line. On top of them this module
provides the total-variation norm (full convention, range [0, 2] for
probability pairs), the Hilbert projective metric, the Birkhoff contraction
coefficient of a row-stochastic kernel, the best mixing constant of a kernel
together with a witness reference measure, and the Levy-Prohorov distance for
labeled measures.

All functions are pure; measure and kernel values are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, EmptyInputError, MissingLabelError

PROB_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weights on an indexed finite support.

    ``labels`` optionally places the atoms on the real line (or in R^p, one
    row per atom); it is required only by label-aware operations such as
    :func:`prokhorov_distance`. A measure constructed with
    ``probability=True`` must have weights summing to 1 within 1e-12.
    Zero-weight atoms are kept: comparability of supports is meaningful.
    """

    weights: np.ndarray
    labels: np.ndarray | None = None
    probability: bool = False

    def __post_init__(self):
        w = _frozen_array(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty 1-D vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if self.probability and abs(w.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probability weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)
        if self.labels is not None:
            lab = _frozen_array(self.labels)
            if lab.shape[0] != w.size:
                raise DimensionError("labels must have one entry per atom")
            object.__setattr__(self, "labels", lab)

    @property
    def support_size(self) -> int:
        return self.weights.size

    def total(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "DiscreteMeasure":
        t = self.total()
        if t <= 0:
            raise ValueError("cannot normalize the zero measure")
        return DiscreteMeasure(self.weights / t, self.labels, probability=True)

    @classmethod
    def point_mass(cls, index: int, size: int, labels=None) -> "DiscreteMeasure":
        w = np.zeros(size)
        w[index] = 1.0
        return cls(w, labels, probability=True)

    @classmethod
    def uniform(cls, size: int, labels=None) -> "DiscreteMeasure":
        return cls(np.full(size, 1.0 / size), labels, probability=True)


@dataclass(frozen=True)
class FiniteKernel:
    """Row-stochastic square matrix: row x is the law of the next state from x."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen_array(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"kernel matrix must be square, got shape {m.shape}")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("kernel entries must be finite and nonnegative")
        bad = np.abs(m.sum(axis=1) - 1.0) > PROB_TOL
        if np.any(bad):
            raise ValueError(f"kernel rows {np.nonzero(bad)[0].tolist()} do not sum to 1")
        object.__setattr__(self, "matrix", m)

    @property
    def support_size(self) -> int:
        return self.matrix.shape[0]

    def propagate(self, mu: DiscreteMeasure) -> DiscreteMeasure:
        """Return mu K, the one-step push-forward of a measure on states."""
        if mu.support_size != self.support_size:
            raise DimensionError("measure and kernel support sizes differ")
        return DiscreteMeasure(mu.weights @ self.matrix, probability=mu.probability)


@dataclass(frozen=True)
class MixingCertificate:
    """Result of the best-constant mixing decomposition of a kernel.

    When ``is_mixing``, every row is sandwiched between ``epsilon * lam`` and
    ``lam / epsilon`` atom-wise; otherwise ``epsilon`` is 0 and no positive
    constant works. ``lam`` is always the geometric-mean witness built from
    the column extrema.
    """

    epsilon: float
    lam: DiscreteMeasure
    is_mixing: bool = field(default=True)

    def __post_init__(self):
        if self.is_mixing and not self.epsilon > 0:
            raise ValueError("mixing certificate requires epsilon > 0")
        if not self.is_mixing and self.epsilon != 0.0:
            raise ValueError("non-mixing certificate must carry epsilon = 0")

    def verify(self, kernel: FiniteKernel, tol: float = 1e-12) -> bool:
        """Check the sandwich inequality against ``kernel`` directly."""
        if not self.is_mixing:
            return True
        lo = self.epsilon * self.lam.weights - tol
        hi = self.lam.weights / self.epsilon + tol
        m = kernel.matrix
        return bool(np.all(m >= lo[None, :]) and np.all(m <= hi[None, :]))


def _check_same_size(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if mu.support_size != nu.support_size:
        raise DimensionError(
            f"support sizes differ: {mu.support_size} vs {nu.support_size}"
        )


def tv_norm(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Total-variation distance, full convention: sum of |mu_j - nu_j|.

    Ranges over [0, 2] for probability measures. The full norm is the
    convention under which tv <= (2/log 3) * hilbert_metric holds verbatim.
    """
    _check_same_size(mu, nu)
    return float(np.abs(mu.weights - nu.weights).sum())


def _hilbert_raw(a: np.ndarray, b: np.ndarray) -> float:
    za = a == 0.0
    zb = b == 0.0
    if za.all() and zb.all():
        return 0.0
    if not np.array_equal(za, zb):
        return math.inf
    r = a[~za] / b[~zb]
    return float(np.log(r.max() / r.min()))


def hilbert_metric(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Hilbert projective metric between nonnegative measures.

    For comparable measures (identical zero sets on a finite support) this is
    log(max_j mu_j/nu_j / min_j mu_j/nu_j), the log-ratio of the extreme
    Radon-Nikodym values; atom-wise extrema coincide with the set-wise
    extrema on finite spaces. Non-comparable measures are at distance
    ``math.inf``; two zero measures are at distance 0. Scale-invariant in
    each argument.
    """
    _check_same_size(mu, nu)
    return _hilbert_raw(mu.weights, nu.weights)


def birkhoff_tau(K: FiniteKernel) -> float:
    """Birkhoff contraction coefficient of a kernel under the Hilbert metric.

    Computed through the projective diameter of the image: with
    Delta = max over row pairs of their Hilbert distance,
    tau = (1 - sqrt(phi)) / (1 + sqrt(phi)) where phi = exp(-Delta).
    phi equals the minimal cross-ratio K(i,k)K(j,l) / (K(j,k)K(i,l)) when all
    entries are positive. Identical rows give 0; rows with different zero
    patterns give 1.
    """
    m = K.matrix
    n = K.support_size
    diam = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d = _hilbert_raw(m[i], m[j])
            if math.isinf(d):
                return 1.0
            diam = max(diam, d)
    s = math.sqrt(math.exp(-diam))
    return (1.0 - s) / (1.0 + s)


def mixing_constant(K: FiniteKernel) -> MixingCertificate:
    """Best mixing constant of a kernel, with a witness reference measure.

    Column-wise, the sandwich eps*lam_j <= K(x,j) <= lam_j/eps is feasible
    iff eps**2 <= min_x K(x,j) / max_x K(x,j), so the maximal constant is
    eps = min_j sqrt(m_j / M_j) over columns with M_j > 0, attained by the
    geometric-mean witness lam_j = sqrt(m_j * M_j). A column that is hit by
    some state but missed by another forces eps = 0.
    """
    m = K.matrix.min(axis=0)
    M = K.matrix.max(axis=0)
    lam = DiscreteMeasure(np.sqrt(m * M))
    active = M > 0
    if np.any((m == 0) & active):
        return MixingCertificate(0.0, lam, is_mixing=False)
    eps = float(np.sqrt(np.min(m[active] / M[active])))
    return MixingCertificate(eps, lam, is_mixing=True)


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a2 = a.reshape(a.shape[0], -1)
    b2 = b.reshape(b.shape[0], -1)
    diff = a2[:, None, :] - b2[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _max_flow(cap: np.ndarray) -> float:
    """Edmonds-Karp max flow from node 0 to the last node, float capacities."""
    n = cap.shape[0]
    source, sink = 0, n - 1
    residual = cap.copy()
    flow = 0.0
    while True:
        parent = np.full(n, -1, dtype=int)
        parent[source] = source
        queue = [source]
        while queue and parent[sink] < 0:
            u = queue.pop(0)
            for v in np.nonzero(residual[u] > 1e-15)[0]:
                if parent[v] < 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] < 0:
            return flow
        path = []
        v = sink
        while v != source:
            path.append((parent[v], v))
            v = parent[v]
        aug = min(residual[u, v] for u, v in path)
        for u, v in path:
            residual[u, v] -= aug
            residual[v, u] += aug
        flow += aug


def _enlargement_feasible(mu: DiscreteMeasure, nu: DiscreteMeasure, alpha: float) -> bool:
    """Check mu(A) <= nu(A^alpha) + alpha for all A via max-flow min-cut."""
    m, n = mu.support_size, nu.support_size
    close = _pairwise_dist(mu.labels, nu.labels) <= alpha
    cap = np.zeros((m + n + 2, m + n + 2))
    cap[0, 1 : m + 1] = mu.weights
    cap[1 : m + 1, m + 1 : m + n + 1] = np.where(close, 2.0, 0.0)
    cap[m + 1 : m + n + 1, m + n + 1] = nu.weights
    # min cut equals 1 - max_A [mu(A) - nu(A^alpha)]
    return _max_flow(cap) >= 1.0 - alpha - 1e-12


def prokhorov_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-6) -> float:
    """Levy-Prohorov distance between labeled probability measures.

    Bisection over alpha in [0, 1]; each feasibility check
    "mu(A) <= nu(A^alpha) + alpha for all A, and symmetrically" is decided
    exactly by a max-flow test on the bipartite closeness graph of the two
    supports. Absolute tolerance ``tol``.
    """
    for m in (mu, nu):
        if m.labels is None:
            raise MissingLabelError("prokhorov_distance requires labeled supports")
        if abs(m.total() - 1.0) > 1e-9:
            raise ValueError("prokhorov_distance requires probability measures")

    def feasible(alpha: float) -> bool:
        return _enlargement_feasible(mu, nu, alpha) and _enlargement_feasible(nu, mu, alpha)

    if feasible(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def empirical_measure(y) -> DiscreteMeasure:
    """Empirical measure of an observation sequence: mass 1/n per point.

    Duplicate observations are merged and their weights summed; atom labels
    carry the observation values, sorted. Accepts scalar observations or
    fixed-length vectors (one row per observation).
    """
    arr = np.asarray(y, dtype=float)
    if arr.size == 0:
        raise EmptyInputError("empirical_measure needs at least one observation")
    if arr.ndim == 1:
        labels, counts = np.unique(arr, return_counts=True)
    else:
        labels, counts = np.unique(arr, axis=0, return_counts=True)
    weights = counts / arr.shape[0]
    return DiscreteMeasure(weights, labels, probability=True)
