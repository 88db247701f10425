"""Synthetic piecewise-stationary bandit for checking regret behaviour of the agents.

Each segment has fixed arm means and a fingerprint source (a histogram shape
from which per-epoch fingerprints are sampled). An oracle cluster model holds
one cluster per distinct segment: the true shape, the true means, and a radius
taken from sampled fingerprints.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bandit import DEFAULT_ALPHA, ActionSet, CmabAgent, RegretTracker, expected_regret, plain_ucb_agent
from .clustering import Cluster, ClusterModel, radius
from .fingerprint import BinEdges, fingerprint_from_counts

BENCH_POLICIES = ("cmab", "ucb_restart", "ucb")


@dataclass(frozen=True)
class Segment:
    means: tuple[float, ...]
    shape: tuple[float, ...]  # fingerprint source distribution over bins
    length: int


@dataclass(frozen=True)
class BanditEnv:
    segments: tuple[Segment, ...]
    noise_sigma: float
    samples_per_fingerprint: int = 500

    def __post_init__(self):
        if not self.segments:
            raise ValueError("environment needs at least one segment")
        n_a, n_r = len(self.segments[0].means), len(self.segments[0].shape)
        for i, s in enumerate(self.segments):
            if len(s.means) != n_a or len(s.shape) != n_r:
                raise ValueError(f"segment {i}: every segment needs {n_a} means and {n_r} shape bins")
            if s.length < 1:
                raise ValueError(f"segment {i}: length must be >= 1")
            if abs(sum(s.shape) - 1.0) > 1e-9 or min(s.shape) < 0:
                raise ValueError(f"segment {i}: shape must be a probability vector")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def n_arms(self) -> int:
        return len(self.segments[0].means)

    @property
    def n_bins(self) -> int:
        return len(self.segments[0].shape)

    @property
    def horizon(self) -> int:
        return sum(s.length for s in self.segments)

    def segment_index(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.segments)), [s.length for s in self.segments])

    def mean_gap(self) -> float:
        """Mean over segments and suboptimal arms of (best mean - arm mean)."""
        gaps = []
        for s in self.segments:
            m = np.asarray(s.means)
            gaps.extend((m.max() - m)[m < m.max()])
        return float(np.mean(gaps)) if gaps else 0.0


def bump_shape(n_bins: int, center: float, width: float) -> tuple[float, ...]:
    """Discretized Gaussian bump, a convenient fingerprint source."""
    j = np.arange(n_bins)
    w = np.exp(-0.5 * ((j - center) / width) ** 2) + 1e-3
    return tuple((w / w.sum()).tolist())


def stationary_env(means=(1.0, 0.8, 0.6, 0.4, 0.2), length: int = 10_000, n_bins: int = 24,
                   noise_ratio: float = 0.1) -> BanditEnv:
    seg = Segment(tuple(means), bump_shape(n_bins, n_bins / 2, 3.0), length)
    env = BanditEnv((seg,), 0.0)
    return BanditEnv((seg,), noise_ratio * env.mean_gap())


def piecewise_env(length: int = 500, n_bins: int = 24, noise_ratio: float = 0.1) -> BanditEnv:
    """Three regimes whose best arms differ (first, last, middle)."""
    means = [(1.0, 0.8, 0.6, 0.4, 0.2), (0.2, 0.4, 0.6, 0.8, 1.0), (0.4, 0.7, 1.0, 0.7, 0.4)]
    centers = [4.0, 12.0, 20.0]
    segs = tuple(Segment(m, bump_shape(n_bins, c, 2.0), length) for m, c in zip(means, centers))
    return BanditEnv(segs, noise_ratio * BanditEnv(segs, 0.0).mean_gap())


def env_from_dict(d: dict) -> BanditEnv:
    n_bins = int(d.get("n_bins", 24))
    segs = []
    for i, s in enumerate(d["segments"]):
        if "shape" in s:
            shape = tuple(float(x) for x in s["shape"])
        else:
            shape = bump_shape(n_bins, float(s["center_bin"]), float(s.get("width_bins", 2.0)))
        segs.append(Segment(tuple(float(m) for m in s["means"]), shape, int(s["length"])))
    segs = tuple(segs)
    if "noise_sigma" in d:
        sigma = float(d["noise_sigma"])
    else:
        sigma = float(d.get("noise_ratio", 0.1)) * BanditEnv(segs, 0.0).mean_gap()
    return BanditEnv(segs, sigma, int(d.get("samples_per_fingerprint", 500)))


def load_env(path) -> BanditEnv:
    return env_from_dict(json.loads(Path(path).read_text()))


def _edges(n_bins: int) -> BinEdges:
    return BinEdges.uniform(-95.0, -95.0 + 2.0 * n_bins, 2.0)


def _actions(n_arms: int) -> ActionSet:
    return ActionSet(tuple(float(-82 + 2 * i) for i in range(n_arms)))


def sample_fingerprints(env: BanditEnv, seg: int, n: int, rng):
    shape = np.asarray(env.segments[seg].shape)
    counts = rng.multinomial(env.samples_per_fingerprint, shape, size=n)
    return [fingerprint_from_counts(c) for c in counts]


def oracle_model(env: BanditEnv, seed: int = 0, n_calibration: int = 1_000) -> ClusterModel:
    """One cluster per segment: true shape as centroid, true means as utility,
    radius = largest KL of ``n_calibration`` sampled fingerprints to the shape."""
    rng = np.random.default_rng(seed)
    clusters = []
    for k, s in enumerate(env.segments):
        fps = sample_fingerprints(env, k, n_calibration, rng)
        center = np.asarray(s.shape)
        clusters.append(Cluster(k, s.shape, float(radius(fps, center)), s.means))
    return ClusterModel(tuple(clusters), _edges(env.n_bins), _actions(env.n_arms).thresholds)


@dataclass
class BenchTrace:
    actions: np.ndarray
    regret: np.ndarray  # per-epoch expected regret g_t

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def total(self) -> float:
        return float(self.regret.sum())


def play(env: BanditEnv, agent: CmabAgent, seed: int, restart_on_change: bool = False) -> BenchTrace:
    """Run one agent through the environment.

    The agent sees e_{t-1} and r_{t-1} at the start of epoch t, as in the
    simulator. With ``restart_on_change`` the agent is re-initialized at each
    true segment boundary (oracle change flag). Fingerprints and reward noise
    come from separate streams so every policy sees the same environment draws.
    """
    ss = np.random.SeedSequence(seed)
    fp_rng, noise_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    seg_of = env.segment_index()
    T = env.horizon
    noise = noise_rng.normal(0.0, env.noise_sigma, size=T) if env.noise_sigma > 0 else np.zeros(T)
    fps = []
    for k in range(len(env.segments)):
        fps.extend(sample_fingerprints(env, k, env.segments[k].length, fp_rng))
    first = sample_fingerprints(env, 0, 1, fp_rng)[0]

    tracker = RegretTracker()
    acts = np.empty(T, dtype=np.int64)
    agent.initialize(first)
    reward = 0.0
    for t in range(T):
        seg = env.segments[seg_of[t]]
        if t > 0:
            if restart_on_change and seg_of[t] != seg_of[t - 1]:
                agent.initialize(fps[t - 1])
            else:
                agent.update(reward, fps[t - 1])
        a, _ = agent.select_action()
        acts[t] = a
        tracker.accumulate(expected_regret(seg.means, a))
        reward = seg.means[a] + noise[t]
    return BenchTrace(acts, np.asarray(tracker.history))


def make_agent(policy: str, env: BanditEnv, model: ClusterModel | None = None,
               alpha: float = DEFAULT_ALPHA) -> CmabAgent:
    actions = _actions(env.n_arms)
    if policy == "cmab":
        return CmabAgent(actions, model if model is not None else oracle_model(env), alpha)
    if policy in ("ucb", "ucb_restart"):
        return plain_ucb_agent(actions, alpha, _edges(env.n_bins))
    raise ValueError(f"unknown bench policy {policy!r}; choose from {BENCH_POLICIES}")


def run_bench(env: BanditEnv, seeds: Sequence[int], policies: Sequence[str] = BENCH_POLICIES,
              alpha: float = DEFAULT_ALPHA) -> dict[str, list[BenchTrace]]:
    model = oracle_model(env) if "cmab" in policies else None
    out: dict[str, list[BenchTrace]] = {p: [] for p in policies}
    for s in seeds:
        for p in policies:
            agent = make_agent(p, env, model, alpha)
            out[p].append(play(env, agent, int(s), restart_on_change=(p == "ucb_restart")))
    return out


def write_regret_csv(path, env: BanditEnv, seeds: Sequence[int], results: dict[str, list[BenchTrace]]) -> Path:
    """Wide rows: seed, epoch, segment, then action_/g_/G_ columns for each policy."""
    policies = list(results)
    cols = ["seed", "epoch", "segment"]
    for p in policies:
        cols += [f"action_{p}", f"g_{p}", f"G_{p}"]
    seg_of = env.segment_index()
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, s in enumerate(seeds):
            traces = [results[p][i] for p in policies]
            cums = [tr.cumulative for tr in traces]
            for t in range(env.horizon):
                row = [s, t, int(seg_of[t])]
                for tr, cum in zip(traces, cums):
                    row += [int(tr.actions[t]), repr(float(tr.regret[t])), repr(float(cum[t]))]
                w.writerow(row)
    return path


def bootstrap_ci(samples, n_boot: int = 10_000, level: float = 0.95, seed: int = 0) -> tuple[float, float, float]:
    """(mean, low, high) percentile-bootstrap interval of the mean."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("bootstrap of an empty sample")
    if x.size == 1:
        return float(x[0]), float(x[0]), float(x[0])
    rng = np.random.default_rng(seed)
    means = x[rng.integers(0, x.size, size=(n_boot, x.size))].mean(axis=1)
    tail = (1.0 - level) / 2.0
    return float(x.mean()), float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))


def sublinearity_ratio(trace: BenchTrace, T: int) -> float:
    """G(2T) / G(T); values well below 2 indicate sublinear regret growth."""
    cum = trace.cumulative
    if 2 * T > len(cum):
        raise ValueError("trace shorter than 2T")
    return float(cum[2 * T - 1] / cum[T - 1]) if cum[T - 1] > 0 else math.nan
