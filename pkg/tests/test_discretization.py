import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvqkd.discretization import (
    BinnedDistribution,
    BinningScheme,
    JointBinnedDistribution,
    bin_probabilities,
    conditional_shannon_entropy,
    expected_distance,
    joint_bin_distribution,
    joint_statistics,
    overlap_c,
    overlap_c_series,
    renyi_half_entropy,
    shannon_entropy,
)
from cvqkd.model import ScenarioModel
from oracles import joint_table_quad, overlap_midpoint

HEADLINE = ScenarioModel()


class TestBinningScheme:
    def test_alphabet_and_edges(self):
        s = BinningScheme(52.0, 0.01)
        assert s.alphabet_size == 10400
        assert s.lower_edge(1) == -np.inf and s.upper_edge(1) == pytest.approx(-51.99)
        assert s.upper_edge(10400) == np.inf

    def test_rejects_non_integer_alphabet(self):
        with pytest.raises(ValueError):
            BinningScheme(1.0, 0.3)
        with pytest.raises(ValueError):
            BinningScheme(1.0, 0.0)
        with pytest.raises(ValueError):
            BinningScheme(0.5, 1.0)

    def test_bin_index_boundaries(self):
        s = BinningScheme(1.0, 0.5)
        x = [-5.0, -1.0, -0.99, -0.5, 0.0, 0.01, 0.5, 0.51, 7.0]
        # intervals are open on the left and closed on the right
        assert s.bin_index(x).tolist() == [1, 1, 1, 1, 2, 3, 3, 4, 4]
        inf = BinningScheme(math.inf, 0.5)
        assert inf.bin_index([-0.6, -0.5, 0.0, 0.2]).tolist() == [-1, -1, 0, 1]


class TestMarginals:
    def test_symmetry(self):
        p = bin_probabilities(3.0, BinningScheme(4.0, 0.25)).probabilities
        np.testing.assert_allclose(p, p[::-1], atol=1e-12)

    def test_coarse_infinite_bins_collapse(self):
        p = bin_probabilities(0.5, BinningScheme(math.inf, 1e4))
        assert p.probabilities.max() == pytest.approx(0.5, abs=1e-9)
        p = bin_probabilities(0.5, BinningScheme(1e4, 1e4))
        assert p.probabilities.max() == pytest.approx(0.5, abs=1e-9)
        p = bin_probabilities(0.5, BinningScheme(1e4, 2e4 / 3))
        assert p.probabilities[1] == pytest.approx(1.0, abs=1e-12)

    def test_headline_end_bin_tails(self):
        s = BinningScheme(52.0, 0.01)
        p = bin_probabilities(HEADLINE.alice_variance, s).probabilities
        # 52 / sqrt(9.98) is about 16.5 sigma
        assert 0 < p[0] < 1e-55
        assert p[-1] == pytest.approx(p[0], rel=1e-10)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_infinite_truncation_mass(self):
        p = bin_probabilities(2.0, BinningScheme(math.inf, 0.1))
        assert p.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
        assert min(p.probabilities[0], p.probabilities[-1]) < 1e-12

    def test_refinement_never_decreases_entropy(self):
        h = [shannon_entropy(bin_probabilities(2.0, BinningScheme(6.0, d))) for d in (1.0, 0.5, 0.25, 0.125)]
        assert all(b >= a - 1e-12 for a, b in zip(h, h[1:]))


class TestEntropies:
    def test_uniform_and_point_mass(self):
        u = BinnedDistribution(np.full(16, 1 / 16))
        assert shannon_entropy(u) == pytest.approx(4.0)
        assert renyi_half_entropy(u) == pytest.approx(4.0)
        point = BinnedDistribution([0.0, 1.0, 0.0])
        assert shannon_entropy(point) == 0.0 and renyi_half_entropy(point) == 0.0

    @given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30).filter(lambda v: sum(v) > 1e-3))
    def test_renyi_half_dominates_shannon(self, weights):
        p = np.asarray(weights) / sum(weights)
        d = BinnedDistribution(p)
        assert renyi_half_entropy(d) >= shannon_entropy(d) - 1e-12

    def test_invalid_distribution(self):
        with pytest.raises(ValueError):
            BinnedDistribution([0.5, 0.6])
        with pytest.raises(ValueError):
            BinnedDistribution([1.5, -0.5])

    def test_conditional_entropy_of_independent_table(self):
        pa = np.array([0.2, 0.3, 0.5])
        pb = np.array([0.6, 0.4])
        joint = JointBinnedDistribution.from_dense(np.outer(pa, pb))
        assert conditional_shannon_entropy(joint) == pytest.approx(shannon_entropy(BinnedDistribution(pa)))


class TestOverlap:
    def test_small_delta_value(self):
        assert overlap_c(0.01) == pytest.approx(0.01**2 / (2 * math.pi), rel=1e-6)
        assert overlap_c(0.01) == pytest.approx(1.5915e-5, rel=1e-4)
        assert math.log2(1 / overlap_c(0.01)) == pytest.approx(15.94, abs=0.01)

    @pytest.mark.parametrize("delta", [0.05, 0.3, 0.8, 1.5, 2.5])
    def test_against_midpoint_oracle(self, delta):
        assert overlap_c(delta) == pytest.approx(overlap_midpoint(delta), rel=1e-5)

    @pytest.mark.parametrize("delta", [0.001, 0.01, 0.1])
    def test_against_series(self, delta):
        assert overlap_c(delta) == pytest.approx(overlap_c_series(delta), rel=1e-9)

    def test_monotone_and_limit(self):
        ds = np.linspace(0.005, 3.0, 60)
        cs = [overlap_c(d) for d in ds]
        assert all(b > a for a, b in zip(cs, cs[1:]))
        for d in (1e-2, 1e-3, 1e-4):
            assert math.log2(1 / overlap_c(d)) + 2 * math.log2(d) == pytest.approx(math.log2(2 * math.pi), abs=1e-6)

    def test_within_one_percent_up_to_half(self):
        for d in np.linspace(0.001, 0.5, 50):
            assert abs(overlap_c(d) / (d * d / (2 * math.pi)) - 1) < 0.01

    def test_rejects_trivial_regime(self):
        with pytest.raises(ValueError):
            overlap_c(40.0)
        with pytest.raises(ValueError):
            overlap_c(0.0)


class TestJointTable:
    @pytest.mark.parametrize(
        "va,vb,z,alpha,delta",
        [
            (1.0, 1.5, 0.9, 2.0, 0.5),
            (2.0, 2.0, -1.2, 3.0, 1.0),
            (4.0, 3.0, 3.3, 2.0, 0.25),
            (1.0, 1.0, 0.0, 1.5, 0.5),
        ],
    )
    def test_against_quadrature_oracle(self, va, vb, z, alpha, delta):
        scheme = BinningScheme(alpha, delta)
        joint = joint_bin_distribution(np.array([[va, z], [z, vb]]), scheme)
        dense, r0, c0 = joint.to_dense()
        ref = joint_table_quad(va, vb, z, alpha, delta)
        full = np.zeros_like(ref)
        full[r0 - 1 : r0 - 1 + dense.shape[0], c0 - 1 : c0 - 1 + dense.shape[1]] = dense
        np.testing.assert_allclose(full, ref, atol=1e-10)

    def test_product_when_uncorrelated(self):
        scheme = BinningScheme(3.0, 0.5)
        joint = joint_bin_distribution(np.diag([1.0, 2.0]), scheme)
        dense, _, _ = joint.to_dense()
        pa = bin_probabilities(1.0, scheme).probabilities
        pb = bin_probabilities(2.0, scheme).probabilities
        np.testing.assert_allclose(dense, np.outer(pa, pb), atol=1e-8)

    def test_exchange_symmetry(self):
        scheme = BinningScheme(4.0, 0.5)
        dense, _, _ = joint_bin_distribution(np.array([[2.0, 1.7], [1.7, 2.0]]), scheme).to_dense()
        np.testing.assert_allclose(dense, dense.T, atol=1e-10)

    def test_marginals_and_mass(self):
        blk = HEADLINE.quadrature_block("q")
        joint = joint_bin_distribution(blk, BinningScheme(math.inf, 0.05))
        assert joint.total_mass() == pytest.approx(1.0, abs=1e-6)
        rows = joint.marginal_rows()
        ref = bin_probabilities(blk[0, 0], BinningScheme(math.inf, 0.05))
        for i in rows.indices[::50]:
            assert rows.mass_at(i) == pytest.approx(ref.mass_at(i), abs=1e-6)

    def test_near_singular_rejected(self):
        with pytest.raises(ValueError):
            joint_bin_distribution(np.array([[1.0, 1.0], [1.0, 1.0]]), BinningScheme(2.0, 0.5))

    def test_monte_carlo_frequencies(self):
        scheme = BinningScheme(2.0, 0.5)
        cov = np.array([[1.2, 0.9], [0.9, 1.0]])
        dense, r0, c0 = joint_bin_distribution(cov, scheme).to_dense()
        rng = np.random.default_rng(17)
        xy = rng.multivariate_normal([0, 0], cov, size=1_000_000)
        ia, ib = scheme.bin_index(xy[:, 0]), scheme.bin_index(xy[:, 1])
        counts = np.zeros((8, 8))
        np.add.at(counts, (ia - 1, ib - 1), 1)
        freq = counts / counts.sum()
        model = np.zeros((8, 8))
        model[r0 - 1 : r0 - 1 + dense.shape[0], c0 - 1 : c0 - 1 + dense.shape[1]] = dense
        se = np.sqrt(np.maximum(model * (1 - model), 1e-12) / counts.sum())
        assert np.all(np.abs(freq - model) <= 5 * se + 1e-9)


class TestDistance:
    def test_trivial_cases(self):
        diag = JointBinnedDistribution.from_dense(np.diag([0.25, 0.25, 0.5]))
        assert expected_distance(diag) == (0.0, 0.0)
        indep = JointBinnedDistribution.from_dense(np.full((2, 2), 0.25))
        assert expected_distance(indep)[0] == pytest.approx(0.5)

    def test_translation_and_exchange_invariance(self):
        t = np.random.default_rng(2).random((4, 4))
        t /= t.sum()
        base = expected_distance(JointBinnedDistribution.from_dense(t))
        shifted = expected_distance(JointBinnedDistribution.from_dense(t, row_offset=7, col_offset=7))
        swapped = expected_distance(JointBinnedDistribution.from_dense(t.T))
        assert shifted == pytest.approx(base) and swapped == pytest.approx(base)

    def test_streaming_statistics_match_table(self):
        scheme = BinningScheme(math.inf, 0.1)
        blk = HEADLINE.quadrature_block("q")
        joint = joint_bin_distribution(blk, scheme)
        stats = joint_statistics(blk, scheme)
        m, v = expected_distance(joint)
        assert stats.mean_distance == pytest.approx(m, rel=1e-12)
        assert stats.var_distance == pytest.approx(v, rel=1e-10)
        assert stats.h_a_given_b == pytest.approx(conditional_shannon_entropy(joint), abs=1e-6)

    def test_headline_distance_monte_carlo(self):
        scheme = BinningScheme(52.0, 0.01)
        stats = HEADLINE.joint_statistics(scheme)
        rng = np.random.default_rng(23)
        xy = rng.multivariate_normal([0, 0], HEADLINE.quadrature_block("q"), size=1_000_000)
        d = np.abs(scheme.bin_index(xy[:, 0]) - scheme.bin_index(xy[:, 1]))
        se = math.sqrt(stats.var_distance / d.size)
        assert abs(d.mean() - stats.mean_distance) < 5 * se


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 5.0), st.floats(0.3, 5.0), st.floats(-0.95, 0.95))
def test_joint_table_normalized_with_consistent_marginals(va, vb, rho):
    scheme = BinningScheme(3.0, 0.5)
    z = rho * math.sqrt(va * vb)
    joint = joint_bin_distribution(np.array([[va, z], [z, vb]]), scheme)
    assert joint.total_mass() == pytest.approx(1.0, abs=1e-6)
    dense, r0, _ = joint.to_dense()
    pa = bin_probabilities(va, scheme)
    for i, row in enumerate(dense.sum(axis=1)):
        assert row == pytest.approx(pa.mass_at(r0 + i), abs=1e-6)
