"""Cross-seed aggregation of run outputs into plot-ready tables with bootstrap intervals."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

from .bench import bootstrap_ci
from .metrics import _write_csv, nearest_rank, read_csv

TIMESERIES_COLUMNS = ["technology", "role", "policy", "time_s", "n_seeds", "eff_throughput_mean",
                      "eff_throughput_ci_low", "eff_throughput_ci_high"]
UPT_P75_COLUMNS = ["technology", "role", "policy", "n_seeds", "upt_p75_mean", "upt_p75_ci_low", "upt_p75_ci_high"]
TOTALS_COLUMNS = ["seed", "files_completed", "bits_ok", "bits_failed", "bits_dropped"]


class ReportError(ValueError):
    pass


def find_seed_dirs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise ReportError(f"{root}: not a directory")
    dirs = sorted(p.parent for p in root.glob("**/metrics.csv"))
    if not dirs:
        raise ReportError(f"{root}: no result sets (metrics.csv) found")
    return dirs


def load_results(root):
    metrics, upt = [], []
    for d in find_seed_dirs(root):
        metrics.extend(read_csv(d / "metrics.csv"))
        upt.extend(read_csv(d / "upt.csv"))
    return metrics, upt


def effective_throughput_series(metrics_rows) -> list[dict]:
    """Per (group, time): mean over seeds of the group-average effective throughput, with 95% CI."""
    per = defaultdict(lambda: defaultdict(list))  # (group, time) -> seed -> values
    for r in metrics_rows:
        key = (r["technology"], r["role"], r["policy"], float(r["time_s"]))
        per[key][r["seed"]].append(float(r["eff_throughput_mbps"]))
    out = []
    for key in sorted(per):
        seed_means = [float(np.mean(v)) for v in per[key].values()]
        m, lo, hi = bootstrap_ci(seed_means)
        out.append(dict(zip(TIMESERIES_COLUMNS, (*key, len(seed_means), m, lo, hi))))
    return out


def upt_p75_table(upt_rows) -> list[dict]:
    """Per group: nearest-rank 75th-percentile UPT of each seed, then mean and 95% CI across seeds."""
    per = defaultdict(lambda: defaultdict(list))
    for r in upt_rows:
        per[(r["technology"], r["role"], r["policy"])][r["seed"]].append(float(r["upt_mbps"]))
    out = []
    for key in sorted(per):
        p75 = [nearest_rank(v, 75) for v in per[key].values()]
        m, lo, hi = bootstrap_ci(p75)
        out.append(dict(zip(UPT_P75_COLUMNS, (*key, len(p75), m, lo, hi))))
    return out


def seed_totals(metrics_rows, upt_rows) -> list[dict]:
    tot = defaultdict(lambda: {"files_completed": 0, "bits_ok": 0, "bits_failed": 0, "bits_dropped": 0})
    for r in metrics_rows:
        t = tot[r["seed"]]
        t["bits_ok"] += int(r["bits_ok"])
        t["bits_failed"] += int(r["bits_failed"])
        t["bits_dropped"] += int(r["bits_dropped"])
    for r in upt_rows:
        tot[r["seed"]]["files_completed"] += 1
    return [{"seed": s, **tot[s]} for s in sorted(tot, key=int)]


def build_report(root, out=None) -> list[Path]:
    metrics, upt = load_results(root)
    out = Path(out) if out is not None else Path(root)
    out.mkdir(parents=True, exist_ok=True)
    return [
        _write_csv(out / "report_eff_throughput.csv", TIMESERIES_COLUMNS, effective_throughput_series(metrics)),
        _write_csv(out / "report_upt_p75.csv", UPT_P75_COLUMNS, upt_p75_table(upt)),
        _write_csv(out / "report_totals.csv", TOTALS_COLUMNS, seed_totals(metrics, upt)),
    ]
