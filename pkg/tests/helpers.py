"""Shared oracles and random-instance generators for the test suite.

The oracles are deliberately naive: explicit sums over state paths and
subsets, independent of the recursive implementations they check.
"""

import itertools

import numpy as np

from adafilter import (
    AugmentedModel,
    DiscreteMeasure,
    FiniteKernel,
    KernelFamily,
    ObservationModel,
)

HEADLINE_BASE = np.array([[1.0, 0.0], [0.3, 0.7]])
HEADLINE_COEF = np.array([[[-1.0, 1.0], [0.0, 0.0]]])


def headline_family(grid=None) -> KernelFamily:
    """The two-state family [[1-theta, theta], [0.3, 0.7]] on a 21-point grid."""
    if grid is None:
        grid = np.linspace(0.05, 0.95, 21)
    return KernelFamily.affine(HEADLINE_BASE, HEADLINE_COEF, grid)


def headline_model(sigma=0.5, grid=None) -> AugmentedModel:
    fam = headline_family(grid)
    return AugmentedModel(
        fam,
        DiscreteMeasure.uniform(fam.size),
        ObservationModel([0.0, 1.0], sigma),
        DiscreteMeasure.uniform(2),
    )


def random_positive_kernel(gen, n, low=0.02) -> FiniteKernel:
    m = gen.uniform(low, 1.0, size=(n, n))
    return FiniteKernel(m / m.sum(axis=1, keepdims=True))


def random_prob_vector(gen, n, low=0.02) -> np.ndarray:
    w = gen.uniform(low, 1.0, size=n)
    return w / w.sum()


def random_instance(gen, max_states=3, max_grid=3, max_n=6):
    """A random small augmented model plus an observation sequence."""
    S = int(gen.integers(2, max_states + 1))
    G = int(gen.integers(1, max_grid + 1))
    n = int(gen.integers(1, max_n + 1))
    kernels = tuple(random_positive_kernel(gen, S) for _ in range(G))
    fam = KernelFamily(np.arange(G, dtype=float), kernels)
    obs = ObservationModel(gen.uniform(-1.0, 1.0, S), float(gen.uniform(0.3, 2.0)))
    model = AugmentedModel(
        fam,
        DiscreteMeasure(random_prob_vector(gen, G), probability=True),
        obs,
        DiscreteMeasure(random_prob_vector(gen, S), probability=True),
    )
    y = gen.normal(0.0, 1.0, n)
    return model, y


def enum_filter(K: FiniteKernel, obs: ObservationModel, initial: DiscreteMeasure, y):
    """Path-sum oracle for the per-parameter filter.

    Sums mu(x0) * prod_k K(x_{k-1}, x_k) g(y_k - h(x_k)) over all state
    paths; returns (normalized terminal law, log total mass).
    """
    S = K.support_size
    n = len(y)
    w = np.zeros(S)
    for path in itertools.product(range(S), repeat=n + 1):
        p = initial.weights[path[0]]
        for k in range(1, n + 1):
            p *= K.matrix[path[k - 1], path[k]] * obs.density(y[k - 1], path[k])
        w[path[n]] += p
    return w / w.sum(), float(np.log(w.sum()))


def enum_augmented(model: AugmentedModel, y):
    """Path-plus-parameter oracle for the joint filter.

    Returns (joint law over (grid point, terminal state), log total mass).
    """
    G, S = model.family.size, model.family.support_size
    joint = np.zeros((G, S))
    for g in range(G):
        K = model.family.kernels[g]
        w = np.zeros(S)
        for path in itertools.product(range(S), repeat=len(y) + 1):
            p = model.initial.weights[path[0]]
            for k in range(1, len(y) + 1):
                p *= K.matrix[path[k - 1], path[k]] * model.obs.density(y[k - 1], path[k])
            w[path[-1]] += p
        joint[g] = model.prior.weights[g] * w
    total = joint.sum()
    return joint / total, float(np.log(total))


def hilbert_subset_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Hilbert metric by exhaustive enumeration of nonempty support subsets."""
    a, b = mu.weights, nu.weights
    n = a.size
    ratios = []
    for bits in range(1, 2**n):
        mask = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        den = b[mask].sum()
        if den > 0:
            ratios.append(a[mask].sum() / den)
    ratios = np.array(ratios)
    return float(np.log(ratios.max() / ratios.min()))


def softmax_kernel(theta):
    """A smooth, genuinely nonlinear two-state family for derivative tests."""
    t = float(np.atleast_1d(theta)[0])
    logits = np.array([[0.0, t + 0.3 * t * t], [0.5 * np.sin(t), 0.0]])
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def softmax_kernel_derivative(theta):
    t = float(np.atleast_1d(theta)[0])
    K = softmax_kernel(t)
    dlogits = np.array([[0.0, 1.0 + 0.6 * t], [0.5 * np.cos(t), 0.0]])
    out = np.empty((1, 2, 2))
    for i in range(2):
        row, d = K[i], dlogits[i]
        out[0, i] = row * (d - row @ d)
    return out
