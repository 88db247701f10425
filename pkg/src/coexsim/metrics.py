"""Simulation outputs: per-epoch device rows, per-file UPT rows, MAC counters and percentile tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

METRICS_COLUMNS = [
    "seed", "epoch", "time_s", "device", "technology", "role", "policy", "gamma_dbm", "cluster", "theta",
    "bits_ok", "bits_failed", "bits_dropped", "reward_mbps", "eff_throughput_mbps", "samples",
]
UPT_COLUMNS = [
    "seed", "device", "technology", "role", "policy", "arrival_s", "completion_s",
    "file_bits", "delivered_bits", "dropped_bits", "upt_mbps",
]
DEVICE_COLUMNS = [
    "seed", "device", "technology", "role", "policy", "tx_node", "rx_node", "tx_attempts", "failed_ppdus",
    "freezes", "virtual_collisions", "airtime_s", "bits_ok", "bits_failed", "bits_dropped",
    "eff_throughput_mbps",
]
SUMMARY_COLUMNS = ["technology", "role", "policy", "n_files", "upt_p25", "upt_p50", "upt_p75", "upt_p90",
                   "upt_mean", "eff_throughput_mean"]
AGENT_COLUMNS_BASE = ["seed", "epoch", "device", "cluster", "theta", "gamma_dbm", "reward_mbps"]
PERCENTILES = (25, 50, 75, 90)


def nearest_rank(samples: Sequence[float], pct: float) -> float | None:
    """Nearest-rank percentile; None for an empty sample set."""
    if not samples:
        return None
    if not 0 < pct <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    s = sorted(samples)
    rank = max(1, math.ceil(pct / 100.0 * len(s)))
    return s[rank - 1]


@dataclass
class MetricsReport:
    seed: int
    scenario_name: str
    epoch_rows: list[dict] = field(default_factory=list)
    upt_rows: list[dict] = field(default_factory=list)
    device_rows: list[dict] = field(default_factory=list)
    agent_rows: list[dict] = field(default_factory=list)
    bits_generated: int = 0
    bits_delivered: int = 0
    bits_dropped: int = 0
    bits_queued: int = 0

    def summary_rows(self) -> list[dict]:
        return summarize(self.upt_rows, self.device_rows)

    def write(self, outdir, debug_bandit: bool = False) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        files = [
            _write_csv(outdir / "metrics.csv", METRICS_COLUMNS, self.epoch_rows),
            _write_csv(outdir / "upt.csv", UPT_COLUMNS, self.upt_rows),
            _write_csv(outdir / "summary.csv", SUMMARY_COLUMNS, self.summary_rows()),
            _write_csv(outdir / "devices.csv", DEVICE_COLUMNS, self.device_rows),
        ]
        if debug_bandit and self.agent_rows:
            cols = list(self.agent_rows[0].keys())
            files.append(_write_csv(outdir / "agents.csv", cols, self.agent_rows))
        return files


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))  # plain repr even for numpy scalars
    return v


def _write_csv(path: Path, columns, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarize(upt_rows: Sequence[dict], device_rows: Sequence[dict] = ()) -> list[dict]:
    """Nearest-rank UPT percentiles per (technology, role, policy) group."""
    groups: dict[tuple, list[float]] = {}
    eff: dict[tuple, list[float]] = {}
    for r in device_rows:
        key = (r["technology"], r["role"], r["policy"])
        groups.setdefault(key, [])
        eff.setdefault(key, []).append(float(r["eff_throughput_mbps"]))
    for r in upt_rows:
        groups.setdefault((r["technology"], r["role"], r["policy"]), []).append(float(r["upt_mbps"]))
    out = []
    for key in sorted(groups):
        s = groups[key]
        row = {"technology": key[0], "role": key[1], "policy": key[2], "n_files": len(s)}
        for p in PERCENTILES:
            row[f"upt_p{p}"] = nearest_rank(s, p)
        row["upt_mean"] = sum(s) / len(s) if s else None
        e = eff.get(key, [])
        row["eff_throughput_mean"] = sum(e) / len(e) if e else None
        out.append(row)
    return out
