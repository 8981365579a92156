import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arcfdr.core import (
    ConfigError,
    InputError,
    RejectionSet,
    Score,
    ScoreKind,
    WeightSequence,
    harmonic_number,
    is_self_consistent,
    minimal_k_evalue,
    minimal_k_pvalue,
)


class TestScore:
    def test_valid_pvalue(self):
        assert Score(0.5, ScoreKind.P_VALUE).value == 0.5

    def test_pvalue_bounds(self):
        Score(0.0, ScoreKind.P_VALUE)
        Score(1.0, ScoreKind.P_VALUE)
        with pytest.raises(InputError):
            Score(1.5, ScoreKind.P_VALUE)
        with pytest.raises(InputError):
            Score(-0.1, ScoreKind.P_VALUE)

    def test_evalue_range(self):
        Score(0.0, ScoreKind.E_VALUE)
        Score(math.inf, ScoreKind.E_VALUE)
        with pytest.raises(InputError):
            Score(-1.0, ScoreKind.E_VALUE)

    def test_nan_rejected(self):
        with pytest.raises(InputError):
            Score(math.nan, ScoreKind.P_VALUE)


class TestWeightSequence:
    def test_geometric(self):
        w = WeightSequence.geometric(0.5)
        assert w.gamma(1) == 0.5
        assert w.gamma(2) == 0.25
        assert w.tail_mass(0) == 1.0
        assert w.tail_mass(2) == 0.25
        assert w.gamma_max == 0.5

    def test_uniform(self):
        w = WeightSequence.uniform_finite(4)
        assert w.gamma(4) == 0.25
        assert w.gamma(5) == 0.0
        assert w.tail_mass(1) == 0.75
        assert w.gamma_max == 0.25

    def test_explicit(self):
        w = WeightSequence.explicit([0.5, 0.3])
        assert w.gamma(2) == 0.3
        assert w.gamma(3) == 0.0
        assert w.tail_mass(1) == 0.3
        assert w.gamma_max == 0.5

    def test_sum_over_one_rejected(self):
        with pytest.raises(InputError):
            WeightSequence.explicit([0.7, 0.7])

    def test_negative_rejected(self):
        with pytest.raises(InputError):
            WeightSequence.explicit([0.5, -0.1])

    def test_bad_q(self):
        with pytest.raises(InputError):
            WeightSequence.geometric(1.0)

    @given(st.floats(min_value=0.01, max_value=0.99), st.integers(1, 200))
    def test_geometric_tail_matches_sum(self, q, t):
        w = WeightSequence.geometric(q)
        direct = sum(w.gamma(i) for i in range(t + 1, t + 3000))
        assert w.tail_mass(t) == pytest.approx(direct, rel=1e-6, abs=1e-12)


class TestHarmonic:
    def test_k1(self):
        assert harmonic_number(1) == 1.0

    def test_k3(self):
        assert harmonic_number(3) == pytest.approx(11.0 / 6.0, abs=1e-15)

    def test_k1000_reference(self):
        # compensated summation oracle, summed smallest-first
        ref = math.fsum(1.0 / i for i in range(1000, 0, -1))
        assert abs(harmonic_number(1000) - ref) < 1e-9

    def test_zero_rejected(self):
        with pytest.raises(InputError):
            harmonic_number(0)

    @given(st.integers(1, 500))
    def test_log_bounds(self, K):
        h = harmonic_number(K)
        assert math.log(K) < h <= math.log(K) + 1.0


class TestMinimalK:
    def test_evalue_boundary_exact(self):
        # e exactly at the k=3 grid value must report 3, weak inequality;
        # the grid is 1/(k * (alpha*gamma)) with alpha*gamma formed first
        alpha, gamma = 0.05, 0.01
        e = 1.0 / (3 * (alpha * gamma))
        assert minimal_k_evalue(e, alpha, gamma) == 3

    def test_pvalue_boundary_exact(self):
        alpha, gamma = 0.3, 1.0 / 3.0
        assert minimal_k_pvalue(2 * alpha * gamma, alpha, gamma) == 2

    def test_zero_gamma(self):
        assert minimal_k_evalue(10.0, 0.1, 0.0) == math.inf
        # weight 0 carries no error budget, even for p = 0
        assert minimal_k_pvalue(0.0, 0.1, 0.0) == math.inf

    def test_infinite_evalue(self):
        assert minimal_k_evalue(math.inf, 0.1, 0.5) == 1

    def test_tiny_evalue(self):
        assert minimal_k_evalue(1e-300, 0.1, 0.5) == math.inf

    @given(st.floats(min_value=1e-6, max_value=1e6),
           st.floats(min_value=0.01, max_value=1.0),
           st.floats(min_value=1e-4, max_value=1.0))
    @settings(max_examples=300)
    def test_evalue_is_minimal(self, e, alpha, gamma):
        k = minimal_k_evalue(e, alpha, gamma)
        ag = alpha * gamma
        if k is not math.inf:
            assert e >= 1.0 / (k * ag)
            if k > 1:
                assert e < 1.0 / ((k - 1) * ag)

    @given(st.floats(min_value=0.0, max_value=1.0),
           st.floats(min_value=0.01, max_value=1.0),
           st.floats(min_value=1e-4, max_value=1.0))
    @settings(max_examples=300)
    def test_pvalue_is_minimal(self, p, alpha, gamma):
        k = minimal_k_pvalue(p, alpha, gamma)
        ag = alpha * gamma  # thresholds are k * (alpha*gamma) throughout
        if k is not math.inf:
            assert p <= k * ag
            if k > 1:
                assert p > (k - 1) * ag


class TestRejectionSet:
    def test_contains_len(self):
        r = RejectionSet((1, 3), 4)
        assert 1 in r and 3 in r and 2 not in r
        assert len(r) == 2

    def test_index_beyond_time(self):
        with pytest.raises(InputError):
            RejectionSet((5,), 4)


class TestSelfConsistency:
    def test_empty_true(self):
        assert is_self_consistent([], [0.5], WeightSequence.uniform_finite(1), 0.1,
                                  kind=ScoreKind.P_VALUE)

    def test_pvalue_example(self):
        w = WeightSequence.uniform_finite(3)
        p = [Score(x, ScoreKind.P_VALUE) for x in (0.05, 0.5, 0.09)]
        assert is_self_consistent({1, 3}, p, w, 0.3)

    def test_evalue_example(self):
        w = WeightSequence.uniform_finite(3)
        e = [Score(x, ScoreKind.E_VALUE) for x in (50.0, 1.0, 2.0)]
        assert not is_self_consistent({1, 2}, e, w, 0.1)

    def test_out_of_range(self):
        w = WeightSequence.uniform_finite(2)
        with pytest.raises(InputError):
            is_self_consistent({3}, [0.1, 0.1], w, 0.1, kind=ScoreKind.P_VALUE)

    def test_bad_alpha(self):
        with pytest.raises(ConfigError):
            is_self_consistent([], [], WeightSequence.uniform_finite(1), 0.0,
                               kind=ScoreKind.P_VALUE)

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=8),
           st.floats(min_value=0.05, max_value=0.5))
    @settings(max_examples=200)
    def test_monotone_in_alpha(self, p, alpha):
        w = WeightSequence.uniform_finite(len(p))
        candidate = [i + 1 for i in range(len(p)) if i % 2 == 0]
        lo = is_self_consistent(candidate, p, w, alpha, kind=ScoreKind.P_VALUE)
        hi = is_self_consistent(candidate, p, w, min(1.0, 2 * alpha),
                                kind=ScoreKind.P_VALUE)
        if lo:
            assert hi
