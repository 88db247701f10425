import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexsim.fingerprint import (
    BinEdges,
    InsufficientObservationError,
    PowerSample,
    SensingFingerprint,
    bin_index,
    build_fingerprint,
    default_edges,
    fingerprint_from_counts,
    kl_divergence,
    kl_matrix,
    kl_to_many,
)

simplex = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=2, max_size=12).filter(lambda v: sum(v) > 1e-6)


def _norm(v):
    a = np.asarray(v, dtype=float)
    return a / a.sum()


class TestBinning:
    def test_default_edges(self):
        e = default_edges()
        assert e.n_bins == 24
        assert e.edges[0] == -95.0 and e.edges[-1] == -47.0
        assert np.allclose(np.diff(e.edges), 2.0)

    def test_outliers_clamp_to_edge_bins(self):
        e = default_edges()
        assert e.index(-200.0) == 0
        assert e.index(-47.0) == 23
        assert e.index(10.0) == 23

    def test_interior_matches_linear_scan(self, rng):
        e = default_edges()
        for v in rng.uniform(-100, -40, 2000):
            expect = 0
            for j in range(1, e.n_bins):
                if v >= e.edges[j]:
                    expect = j
            assert bin_index(v, e.edges) == expect

    def test_edges_must_increase(self):
        with pytest.raises(ValueError):
            BinEdges((-90.0, -90.0, -80.0))
        with pytest.raises(ValueError):
            BinEdges((-90.0, -80.0))


class TestBuildFingerprint:
    def test_unit_mass_in_one_bin(self):
        e = BinEdges.uniform(0.0, 10.0, 1.0)
        fp = build_fingerprint([PowerSample(3.5, i) for i in range(7)], e)
        assert fp.bins == tuple(1.0 if j == 3 else 0.0 for j in range(10))

    def test_two_bins_even_split(self):
        e = BinEdges((0.0, 1.0, 2.0))
        fp = build_fingerprint([PowerSample(v, 0) for v in (0.2, 0.5, 1.2, 1.7)], e)
        assert fp.bins == (0.5, 0.5)

    def test_uniform_samples_fill_bins_evenly(self):
        # 1000 uniform draws over [-90, -50] with 4 dB bins: each bin near 0.1
        gen = np.random.default_rng(7)
        vals = gen.uniform(-90.0, -50.0, 1000)
        e = BinEdges.uniform(-90.0, -50.0, 4.0)
        fp = build_fingerprint([PowerSample(float(v), i) for i, v in enumerate(vals)], e)
        direct = np.histogram(vals, bins=np.arange(-90.0, -49.0, 4.0))[0] / 1000.0
        assert np.allclose(fp.as_array(), direct)
        assert np.max(np.abs(fp.as_array() - 0.1)) < 0.05

    def test_no_samples_raises(self):
        with pytest.raises(InsufficientObservationError):
            build_fingerprint([], default_edges())
        with pytest.raises(InsufficientObservationError):
            fingerprint_from_counts(np.zeros(5))

    def test_nonfinite_sample_rejected(self):
        with pytest.raises(ValueError):
            PowerSample(math.nan, 0)

    @given(st.lists(st.floats(-120, 0, allow_nan=False), min_size=1, max_size=300))
    def test_simplex_preserved(self, values):
        fp = build_fingerprint([PowerSample(v, i) for i, v in enumerate(values)], default_edges())
        assert abs(math.fsum(fp.bins) - 1.0) <= 1e-9
        assert all(0.0 <= b <= 1.0 for b in fp.bins)
        assert fp.sample_count == len(values)

    def test_non_simplex_rejected(self):
        with pytest.raises(ValueError):
            SensingFingerprint((0.5, 0.6))


class TestKlDivergence:
    def test_identity(self):
        assert kl_divergence((0.3, 0.7), (0.3, 0.7)) == 0.0

    def test_two_bin_value(self):
        expect = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
        assert kl_divergence((0.5, 0.5), (0.25, 0.75)) == pytest.approx(expect, abs=1e-5)
        assert expect == pytest.approx(0.1438, abs=1e-4)

    def test_zero_bin_is_finite_after_smoothing(self):
        eps = 1e-6
        p = np.array([1 + eps, eps]) / (1 + 2 * eps)
        q = np.array([0.5 + eps, 0.5 + eps]) / (1 + 2 * eps)
        oracle = float(np.sum(p * np.log(p / q)))
        val = kl_divergence((1.0, 0.0), (0.5, 0.5))
        assert math.isfinite(val)
        assert val == pytest.approx(oracle, abs=1e-12)
        assert val == pytest.approx(math.log(2.0), abs=1e-4)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kl_divergence((0.5, 0.5), (0.2, 0.3, 0.5))

    @given(simplex, st.data())
    def test_gibbs_inequality(self, p, data):
        p = _norm(p)
        q = _norm(data.draw(st.lists(st.floats(0.0, 1.0), min_size=len(p), max_size=len(p)).filter(
            lambda v: sum(v) > 1e-6)))
        d = kl_divergence(p, q)
        assert d >= 0.0
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)

    @given(simplex, st.randoms(use_true_random=False))
    def test_permutation_covariance(self, p, r):
        p = _norm(p)
        q = _norm(np.arange(1, len(p) + 1, dtype=float))
        perm = list(range(len(p)))
        r.shuffle(perm)
        assert kl_divergence(p[perm], q[perm]) == pytest.approx(kl_divergence(p, q), rel=1e-9, abs=1e-12)

    def test_vectorized_forms_agree(self, rng):
        states = rng.dirichlet(np.ones(8), size=20)
        cents = rng.dirichlet(np.ones(8), size=5)
        m = kl_matrix(states, cents)
        for i, s in enumerate(states):
            assert np.allclose(kl_to_many(s, cents), m[i], atol=1e-12)
            for k, c in enumerate(cents):
                assert m[i, k] == pytest.approx(kl_divergence(s, c), abs=1e-12)
