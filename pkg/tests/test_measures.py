import math

import numpy as np
import pytest

from adafilter import (
    DiscreteMeasure,
    FiniteKernel,
    birkhoff_tau,
    empirical_measure,
    hilbert_metric,
    mixing_constant,
    prokhorov_distance,
    tv_norm,
)
from adafilter.errors import DimensionError, EmptyInputError, MissingLabelError
from helpers import hilbert_subset_oracle, random_positive_kernel, random_prob_vector

TV_PER_H = 2.0 / math.log(3.0)


def m(*w, **kw):
    return DiscreteMeasure(np.array(w, dtype=float), **kw)


class TestDiscreteMeasure:
    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            m(0.5, -0.1)

    def test_probability_flag_checks_sum(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([0.5, 0.4], probability=True)
        DiscreteMeasure([0.5, 0.5], probability=True)

    def test_labels_must_align(self):
        with pytest.raises(DimensionError):
            DiscreteMeasure([0.5, 0.5], labels=[0.0])

    def test_immutable(self):
        mu = m(0.5, 0.5)
        with pytest.raises(ValueError):
            mu.weights[0] = 1.0


class TestFiniteKernel:
    def test_rejects_non_stochastic_rows(self):
        with pytest.raises(ValueError, match="rows"):
            FiniteKernel([[0.5, 0.4], [0.5, 0.5]])

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            FiniteKernel([[0.5, 0.5]])


class TestTvNorm:
    def test_identical(self):
        assert tv_norm(m(0.5, 0.5), m(0.5, 0.5)) == 0.0

    def test_disjoint_point_masses(self):
        assert tv_norm(m(1.0, 0.0), m(0.0, 1.0)) == 2.0

    def test_hand_value(self):
        assert tv_norm(m(0.5, 0.5), m(0.25, 0.75)) == pytest.approx(0.5, abs=1e-15)

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            tv_norm(m(1.0), m(0.5, 0.5))

    def test_metric_properties_random_triples(self):
        gen = np.random.default_rng(101)
        for _ in range(1000):
            n = int(gen.integers(1, 8))
            a, b, c = (m(*random_prob_vector(gen, n)) for _ in range(3))
            dab, dba = tv_norm(a, b), tv_norm(b, a)
            assert dab == dba
            assert tv_norm(a, c) <= dab + tv_norm(b, c) + 1e-14
            assert tv_norm(a, a) == 0.0
            if dab == 0.0:
                np.testing.assert_array_equal(a.weights, b.weights)


class TestHilbertMetric:
    def test_identical_and_scale_invariance(self):
        mu = m(0.3, 0.7)
        assert hilbert_metric(mu, mu) == 0.0
        assert hilbert_metric(m(0.5, 0.5), m(1.0, 1.0)) == 0.0

    def test_hand_value_log3(self):
        assert hilbert_metric(m(0.5, 0.5), m(0.25, 0.75)) == pytest.approx(
            math.log(3.0), abs=1e-14
        )

    def test_non_comparable_is_inf(self):
        assert hilbert_metric(m(1.0, 0.0), m(0.5, 0.5)) == math.inf
        assert hilbert_metric(m(1.0, 0.0), m(0.0, 1.0)) == math.inf

    def test_zero_measures(self):
        assert hilbert_metric(m(0.0, 0.0), m(0.0, 0.0)) == 0.0
        assert hilbert_metric(m(0.0, 0.0), m(0.5, 0.5)) == math.inf

    def test_scale_invariance_exact_on_random_pairs(self):
        gen = np.random.default_rng(77)
        for _ in range(200):
            n = int(gen.integers(2, 9))
            a = random_prob_vector(gen, n)
            b = random_prob_vector(gen, n)
            c = float(gen.uniform(0.1, 10.0))
            assert hilbert_metric(m(*(c * a)), m(*b)) == hilbert_metric(m(*a), m(*b))

    def test_matches_subset_enumeration(self):
        gen = np.random.default_rng(5)
        for _ in range(100):
            n = int(gen.integers(2, 13))
            a, b = m(*random_prob_vector(gen, n)), m(*random_prob_vector(gen, n))
            assert hilbert_metric(a, b) == pytest.approx(
                hilbert_subset_oracle(a, b), abs=1e-12
            )

    def test_tv_hilbert_inequality_random(self):
        gen = np.random.default_rng(13)
        for _ in range(1000):
            n = int(gen.integers(2, 9))
            a, b = m(*random_prob_vector(gen, n)), m(*random_prob_vector(gen, n))
            assert tv_norm(a, b) <= TV_PER_H * hilbert_metric(a, b)


class TestBirkhoffTau:
    def test_rank_one_kernel(self):
        assert birkhoff_tau(FiniteKernel([[0.5, 0.5], [0.5, 0.5]])) == 0.0

    def test_permutation_kernel(self):
        assert birkhoff_tau(FiniteKernel([[1.0, 0.0], [0.0, 1.0]])) == 1.0

    def test_cross_ratio_value(self):
        assert birkhoff_tau(FiniteKernel([[0.9, 0.1], [0.1, 0.9]])) == pytest.approx(
            0.8, abs=1e-12
        )

    def test_supremum_definition_by_sampling(self):
        K = FiniteKernel([[0.9, 0.1], [0.1, 0.9]])
        tau = birkhoff_tau(K)
        gen = np.random.default_rng(3)
        best = 0.0
        for _ in range(10_000):
            a = m(*gen.uniform(0.01, 1.0, 2))
            b = m(*gen.uniform(0.01, 1.0, 2))
            h0 = hilbert_metric(a, b)
            if h0 == 0.0:
                continue
            ka = DiscreteMeasure(a.weights @ K.matrix)
            kb = DiscreteMeasure(b.weights @ K.matrix)
            ratio = hilbert_metric(ka, kb) / h0
            assert ratio <= tau + 1e-12
            best = max(best, ratio)
        assert best > tau - 0.05  # the supremum is approached

    def test_contraction_bound_random_kernels(self):
        gen = np.random.default_rng(29)
        for _ in range(1000)		:
            n = int(gen.integers(2, 6))
            K = random_positive_kernel(gen, n)
            eps = mixing_constant(K).epsilon
            assert eps > 0
            assert birkhoff_tau(K) <= (1 - eps**2) / (1 + eps**2) + 1e-10


class TestMixingConstant:
    def test_identical_rows(self):
        cert = mixing_constant(FiniteKernel([[0.5, 0.5], [0.5, 0.5]]))
        assert cert.epsilon == 1.0 and cert.is_mixing

    def test_hand_value(self):
        K = FiniteKernel([[0.9, 0.1], [0.1, 0.9]])
        cert = mixing_constant(K)
        assert cert.epsilon == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert cert.verify(K)
        np.testing.assert_allclose(cert.lam.weights, [0.3, 0.3])

    def test_non_mixing(self):
        cert = mixing_constant(FiniteKernel([[1.0, 0.0], [0.5, 0.5]]))
        assert cert.epsilon == 0.0 and not cert.is_mixing

    def test_certificates_verify_on_random_kernels(self):
        gen = np.random.default_rng(41)
        for _ in range(300):
            K = random_positive_kernel(gen, int(gen.integers(2, 6)))
            assert mixing_constant(K).verify(K)

    def test_maximality(self):
        # no eps' = eps + 1e-3 admits any reference measure: some column
        # must fail the per-column feasibility eps'**2 <= m_j / M_j
        gen = np.random.default_rng(43)
        for _ in range(300):
            K = random_positive_kernel(gen, int(gen.integers(2, 6)))
            eps = mixing_constant(K).epsilon
            m_col = K.matrix.min(axis=0)
            M_col = K.matrix.max(axis=0)
            assert np.min(m_col / M_col) < (eps + 1e-3) ** 2


class TestProkhorov:
    def test_identical(self):
        mu = DiscreteMeasure([0.5, 0.5], labels=[0.0, 1.0], probability=True)
        assert prokhorov_distance(mu, mu) == 0.0

    def test_point_masses_distance_one(self):
        d0 = DiscreteMeasure([1.0], labels=[0.0], probability=True)
        d1 = DiscreteMeasure([1.0], labels=[1.0], probability=True)
        assert prokhorov_distance(d0, d1) == pytest.approx(1.0, abs=1e-6)

    def test_point_masses_short_shift(self):
        d0 = DiscreteMeasure([1.0], labels=[0.0], probability=True)
        d3 = DiscreteMeasure([1.0], labels=[0.3], probability=True)
        assert prokhorov_distance(d0, d3) == pytest.approx(0.3, abs=1e-6)

    def test_symmetry(self):
        gen = np.random.default_rng(59)
        a = DiscreteMeasure(random_prob_vector(gen, 5), labels=gen.normal(0, 1, 5), probability=True)
        b = DiscreteMeasure(random_prob_vector(gen, 4), labels=gen.normal(0, 1, 4), probability=True)
        assert prokhorov_distance(a, b) == prokhorov_distance(b, a)

    def test_unlabeled_raises(self):
        with pytest.raises(MissingLabelError):
            prokhorov_distance(m(1.0), m(1.0))

    def test_bounded_by_tv_half(self):
        # for measures on the line, prokhorov <= tv/2 (move mass in place)
        gen = np.random.default_rng(61)
        labels = np.arange(4.0)
        for _ in range(20):
            a = DiscreteMeasure(random_prob_vector(gen, 4), labels=labels, probability=True)
            b = DiscreteMeasure(random_prob_vector(gen, 4), labels=labels, probability=True)
            assert prokhorov_distance(a, b) <= 0.5 * tv_norm(a, b) + 1e-6


class TestEmpiricalMeasure:
    def test_single_observation(self):
        em = empirical_measure([0.7])
        np.testing.assert_array_equal(em.weights, [1.0])
        np.testing.assert_array_equal(em.labels, [0.7])

    def test_duplicates_merge(self):
        em = empirical_measure([1.0, 1.0])
        np.testing.assert_array_equal(em.weights, [1.0])

    def test_counts(self):
        em = empirical_measure([0.0, 1.0, 1.0, 2.0])
        np.testing.assert_array_equal(em.labels, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(em.weights, [0.25, 0.5, 0.25])

    def test_empty_raises(self):
        with pytest.raises(EmptyInputError):
            empirical_measure([])
