import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coexsim.bench import bootstrap_ci
from coexsim.metrics import METRICS_COLUMNS, UPT_COLUMNS, nearest_rank, read_csv, summarize
from coexsim.report import ReportError, build_report, find_seed_dirs, upt_p75_table
from coexsim.scenario import bundled_scenario, load_scenario
from coexsim.sim import run


class TestNearestRank:
    def test_one_to_hundred(self):
        assert nearest_rank(list(range(1, 101)), 75) == 75

    def test_small_sample(self):
        assert nearest_rank([3.0, 1.0, 2.0, 4.0], 75) == 3.0
        assert nearest_rank([5.0], 25) == 5.0

    def test_empty(self):
        assert nearest_rank([], 75) is None

    def test_bad_percentile(self):
        with pytest.raises(ValueError):
            nearest_rank([1.0], 0)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(0.1, 100))
    def test_is_a_sample_with_enough_below(self, xs, p):
        v = nearest_rank(xs, p)
        assert v in xs
        assert sum(x <= v for x in xs) >= p / 100 * len(xs) - 1e-9


class TestSummary:
    def test_grouped_counts(self):
        rows = [{"technology": t, "role": "adapting", "policy": "cmab", "upt_mbps": u}
                for t, u in [("wifi", 1.0), ("wifi", 3.0), ("nru", 2.0)]]
        out = summarize(rows)
        assert [(r["technology"], r["n_files"]) for r in out] == [("nru", 1), ("wifi", 2)]
        assert out[1]["upt_p75"] == 3.0 and out[1]["upt_mean"] == 2.0

    def test_device_without_files_listed(self):
        dev = [{"technology": "nru", "role": "standard", "policy": "standard", "eff_throughput_mbps": 4.0}]
        out = summarize([], dev)
        assert out[0]["n_files"] == 0 and out[0]["upt_p75"] is None and out[0]["eff_throughput_mean"] == 4.0


class TestBootstrap:
    def test_single_sample_is_a_point(self):
        assert bootstrap_ci([2.5]) == (2.5, 2.5, 2.5)

    def test_contains_mean(self, rng):
        m, lo, hi = bootstrap_ci(rng.normal(3, 1, 50))
        assert lo < m < hi

    def test_shrinks_with_more_seeds(self, rng):
        x = rng.normal(0, 1, 400)
        _, lo1, hi1 = bootstrap_ci(x[:10])
        _, lo2, hi2 = bootstrap_ci(x)
        assert hi2 - lo2 < hi1 - lo1

    def test_empty(self):
        with pytest.raises(ValueError):
            bootstrap_ci([])


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    root = tmp_path_factory.mktemp("res")
    sc = load_scenario(bundled_scenario("desk")).with_(duration_epochs=40)
    for s in (1, 2, 3):
        run(sc.with_(seed=s)).write(root / f"seed_{s:04d}")
    return root


class TestReport:
    def test_column_orders(self, results):
        d = find_seed_dirs(results)[0]
        assert list(read_csv(d / "metrics.csv")[0].keys()) == METRICS_COLUMNS
        assert list(read_csv(d / "upt.csv")[0].keys()) == UPT_COLUMNS

    def test_recounts_totals(self, results, tmp_path):
        build_report(results, tmp_path)
        totals = {r["seed"]: r for r in read_csv(tmp_path / "report_totals.csv")}
        for d in find_seed_dirs(results):
            m = read_csv(d / "metrics.csv")
            u = read_csv(d / "upt.csv")
            t = totals[m[0]["seed"]]
            assert int(t["bits_ok"]) == sum(int(r["bits_ok"]) for r in m)
            assert int(t["files_completed"]) == len(u)

    def test_p75_matches_per_seed_oracle(self, results, tmp_path):
        build_report(results, tmp_path)
        rows = read_csv(tmp_path / "report_upt_p75.csv")
        by_seed = {}
        for d in find_seed_dirs(results):
            for r in read_csv(d / "upt.csv"):
                if (r["technology"], r["role"]) == ("wifi", "standard"):
                    by_seed.setdefault(r["seed"], []).append(float(r["upt_mbps"]))
        want = np.mean([sorted(v)[int(np.ceil(0.75 * len(v))) - 1] for v in by_seed.values()])
        got = next(r for r in rows if (r["technology"], r["role"]) == ("wifi", "standard"))
        assert float(got["upt_p75_mean"]) == pytest.approx(want)
        assert int(got["n_seeds"]) == len(by_seed)

    def test_timeseries_has_every_epoch(self, results, tmp_path):
        build_report(results, tmp_path)
        rows = read_csv(tmp_path / "report_eff_throughput.csv")
        groups = {(r["technology"], r["role"]) for r in rows}
        assert len(rows) == 40 * len(groups)
        assert all(float(r["eff_throughput_ci_low"]) <= float(r["eff_throughput_mean"])
                   <= float(r["eff_throughput_ci_high"]) for r in rows)

    def test_ci_narrows_with_seeds(self):
        rng = np.random.default_rng(9)
        mk = lambda n: [{"technology": "wifi", "role": "a", "policy": "p", "seed": str(s),  # noqa: E731
                         "upt_mbps": str(v)} for s in range(n) for v in rng.normal(10 + rng.normal(), 1, 8)]
        few, many = upt_p75_table(mk(4))[0], upt_p75_table(mk(100))[0]
        assert many["upt_p75_ci_high"] - many["upt_p75_ci_low"] < few["upt_p75_ci_high"] - few["upt_p75_ci_low"]

    def test_empty_directory(self, tmp_path):
        with pytest.raises(ReportError):
            build_report(tmp_path)
