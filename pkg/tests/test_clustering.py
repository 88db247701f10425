import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexsim.clustering import (
    Cluster,
    ClusteringError,
    ClusterModel,
    LabeledState,
    avg_utility,
    centroid,
    kmeans_kl,
    kmeans_objective,
    nearest_cluster,
    radius,
    read_traces,
    train_cluster_model,
    write_traces,
)
from coexsim.fingerprint import BinEdges, SensingFingerprint, default_edges, fingerprint_from_counts, kl_divergence


def _fp(v):
    return SensingFingerprint.from_vector(v)


def _peaked(n_bins, j, rng, n=400):
    w = np.full(n_bins, 0.2)
    w[j] += 20.0
    return fingerprint_from_counts(rng.multinomial(n, w / w.sum()))


class TestClusterStatistics:
    def test_centroid_single_member(self):
        assert np.allclose(centroid([_fp((0.2, 0.8))]), (0.2, 0.8))

    def test_centroid_symmetric_pair(self):
        assert np.allclose(centroid([_fp((1.0, 0.0)), _fp((0.0, 1.0))]), (0.5, 0.5))

    def test_centroid_matches_naive_sum(self, rng):
        vs = rng.dirichlet(np.ones(6), size=100)
        acc = [0.0] * 6
        for v in vs:
            for j in range(6):
                acc[j] += v[j]
        assert np.allclose(centroid([_fp(v) for v in vs]), [a / 100 for a in acc], atol=1e-12)

    def test_radius_cases(self, rng):
        c = (0.3, 0.7)
        assert radius([_fp(c)], np.array(c)) == 0.0
        a, b = _fp((0.9, 0.1)), _fp((0.5, 0.5))
        assert radius([a, b], np.array(c)) == max(kl_divergence(a, c), kl_divergence(b, c))
        vs = [_fp(v) for v in rng.dirichlet(np.ones(5), size=50)]
        center = centroid(vs)
        brute = -1.0
        for v in vs:
            brute = max(brute, kl_divergence(v, center))
        assert radius(vs, center) == brute

    def test_avg_utility_cases(self, rng):
        s = _fp((0.5, 0.5))
        assert np.array_equal(avg_utility([LabeledState(s, (1.0, 2.0))]), [1.0, 2.0])
        assert np.array_equal(avg_utility([LabeledState(s, (1.0, -2.0)), LabeledState(s, (-1.0, 2.0))]), [0, 0])
        us = rng.normal(size=(20, 4))
        naive = [sum(u[a] for u in us) / 20 for a in range(4)]
        assert np.allclose(avg_utility([LabeledState(s, tuple(u)) for u in us]), naive, atol=1e-12)

    def test_avg_utility_skips_unobserved_arms(self):
        s = _fp((0.5, 0.5))
        members = [LabeledState(s, (1.0, math.nan, math.nan)), LabeledState(s, (3.0, 4.0, math.nan))]
        assert np.array_equal(avg_utility(members, fallback=(0, 0, 9.0)), [2.0, 4.0, 9.0])

    def test_empty_cluster_statistics_raise(self):
        with pytest.raises(ClusteringError):
            centroid([])
        with pytest.raises(ClusteringError):
            avg_utility([])


class TestNearestCluster:
    def _model(self, cents):
        n_r = len(cents[0])
        edges = BinEdges.uniform(0.0, float(n_r), 1.0)
        acts = (-82.0, -72.0)
        return ClusterModel(tuple(Cluster(k, tuple(c), 0.1, (0.0, 0.0)) for k, c in enumerate(cents)), edges, acts)

    def test_exhaustive_scan(self, rng):
        cents = [tuple(c) for c in rng.dirichlet(np.ones(6), size=5)]
        model = self._model(cents)
        for _ in range(200):
            s = rng.dirichlet(np.ones(6))
            d = [kl_divergence(s, c) for c in cents]
            assert nearest_cluster(s, model) == d.index(min(d))

    def test_centroid_maps_to_itself(self, rng):
        cents = [tuple(c) for c in rng.dirichlet(np.ones(6), size=5)]
        model = self._model(cents)
        for k, c in enumerate(cents):
            assert nearest_cluster(c, model) == k

    def test_single_cluster(self, rng):
        model = self._model([tuple(rng.dirichlet(np.ones(4)))])
        assert all(nearest_cluster(rng.dirichlet(np.ones(4)), model) == 0 for _ in range(20))

    def test_tie_goes_to_lowest_id(self):
        model = self._model([(0.5, 0.5), (0.5, 0.5)])
        assert nearest_cluster((0.2, 0.8), model) == 0


class TestKMeans:
    def test_single_cluster_is_mean(self, rng):
        vs = rng.dirichlet(np.ones(5), size=30)
        assign, cent, _ = kmeans_kl(vs, 1)
        assert np.all(assign == 0)
        assert np.allclose(cent[0], vs.mean(axis=0) / vs.mean(axis=0).sum())

    def test_separated_groups(self, rng):
        n_r = 12
        a = [_peaked(n_r, 0, rng) for _ in range(25)]
        b = [_peaked(n_r, n_r - 1, rng) for _ in range(25)]
        assign, _, _ = kmeans_kl(a + b, 2, seed=3)
        truth = np.array([0] * 25 + [1] * 25)
        assert np.array_equal(assign, truth) or np.array_equal(assign, 1 - truth)

    def test_identical_states_repair_empty_cluster(self):
        vs = [(0.25, 0.25, 0.5)] * 6
        assign, cent, hist = kmeans_kl(vs, 2, seed=0)
        assert set(assign.tolist()) == {0, 1}
        assert np.allclose(cent, [(0.25, 0.25, 0.5)] * 2)

    def test_too_few_states(self):
        with pytest.raises(ClusteringError):
            kmeans_kl([(0.5, 0.5)], 2)

    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_objective_non_increasing(self, seed, k):
        gen = np.random.default_rng(seed)
        vs = gen.dirichlet(np.full(6, 0.5), size=40)
        assign, cent, hist = kmeans_kl(vs, k, seed=seed)
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))
        assert hist[-1] == pytest.approx(kmeans_objective(vs, cent, assign))


class TestTrainModel:
    def _synthetic(self, rng, n_per=40):
        n_r = default_edges().n_bins
        best = {0: 2, 1: 7, 2: 10}
        traces = []
        for env, peak in zip(range(3), (1, 11, 21)):
            mu = np.full(11, 1.0)
            mu[best[env]] = 5.0
            for _ in range(n_per):
                traces.append(LabeledState(_peaked(n_r, peak, rng), tuple(mu + rng.normal(0, 0.1, 11))))
        return traces, best

    def test_three_environments_recover_best_arms(self, rng):
        traces, best = self._synthetic(rng)
        model = train_cluster_model(traces, 3, seed=1)
        for env, peak in zip(range(3), (1, 11, 21)):
            k = nearest_cluster(traces[env * 40].state, model)
            assert int(np.argmax(model.clusters[k].avg_utility)) == best[env]

    def test_single_cluster_utility_is_global_mean(self, rng):
        traces, _ = self._synthetic(rng, 10)
        model = train_cluster_model(traces, 1)
        mean = np.mean([t.utility for t in traces], axis=0)
        assert np.allclose(model.clusters[0].avg_utility, mean)

    def test_deterministic_file(self, rng, tmp_path):
        traces, _ = self._synthetic(rng, 15)
        train_cluster_model(traces, 3, seed=5).save(tmp_path / "a.json")
        train_cluster_model(traces, 3, seed=5).save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_round_trip(self, rng, tmp_path):
        traces, _ = self._synthetic(rng, 15)
        model = train_cluster_model(traces, 3, seed=5)
        model.save(tmp_path / "m.json")
        assert ClusterModel.load(tmp_path / "m.json") == model

    def test_infinite_radius_round_trip(self, tmp_path):
        model = ClusterModel.single(tuple(float(a) for a in range(-82, -61, 2)))
        model.save(tmp_path / "u.json")
        back = ClusterModel.load(tmp_path / "u.json")
        assert back == model and math.isinf(back.clusters[0].radius)

    def test_insufficient_traces(self, rng):
        traces, _ = self._synthetic(rng, 1)
        with pytest.raises(ClusteringError, match="insufficient"):
            train_cluster_model(traces, 8)

    def test_trace_csv_round_trip(self, rng, tmp_path):
        traces, _ = self._synthetic(rng, 5)
        traces[0] = LabeledState(traces[0].state, (math.nan,) * 10 + (1.5,))
        write_traces(tmp_path / "t.csv", traces)
        back = read_traces(tmp_path / "t.csv")
        assert len(back) == len(traces)
        for a, b in zip(traces, back):
            assert np.allclose(a.state.as_array(), b.state.as_array(), atol=1e-15)
            assert np.array_equal(np.array(a.utility), np.array(b.utility), equal_nan=True)
