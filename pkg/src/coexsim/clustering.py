"""Offline k-means (KL distance) clustering of sensing fingerprints and the cluster model file."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .fingerprint import BinEdges, SensingFingerprint, default_edges, kl_divergence, kl_matrix, kl_to_many

MODEL_FORMAT = "coexsim.cluster-model"
MODEL_VERSION = 1
DEFAULT_N_CLUSTERS = 8


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class Cluster:
    id: int
    centroid: tuple[float, ...]
    radius: float
    avg_utility: tuple[float, ...]

    def __post_init__(self):
        if self.radius < 0 or math.isnan(self.radius):
            raise ClusteringError(f"cluster {self.id}: radius must be >= 0")
        if abs(math.fsum(self.centroid) - 1.0) > 1e-9 or min(self.centroid) < 0:
            raise ClusteringError(f"cluster {self.id}: centroid is not a simplex")


@dataclass(frozen=True)
class LabeledState:
    """A fingerprint with per-arm utilities; NaN marks an arm not observed in that state."""

    state: SensingFingerprint
    utility: tuple[float, ...]


@dataclass(frozen=True)
class ClusterModel:
    clusters: tuple[Cluster, ...]
    bin_edges: BinEdges
    actions: tuple[float, ...]

    def __post_init__(self):
        if not self.clusters:
            raise ClusteringError("cluster model needs at least one cluster")
        n_r, n_a = self.bin_edges.n_bins, len(self.actions)
        for c in self.clusters:
            if len(c.centroid) != n_r:
                raise ClusteringError(f"cluster {c.id}: centroid has {len(c.centroid)} bins, expected {n_r}")
            if len(c.avg_utility) != n_a:
                raise ClusteringError(f"cluster {c.id}: utility has {len(c.avg_utility)} entries, expected {n_a}")
        if [c.id for c in self.clusters] != list(range(len(self.clusters))):
            raise ClusteringError("cluster ids must be 0..N_c-1 in order")
        object.__setattr__(self, "_centroids", np.array([c.centroid for c in self.clusters], dtype=float))

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def centroids(self) -> np.ndarray:
        return self._centroids

    @classmethod
    def single(cls, actions: Sequence[float], edges: BinEdges | None = None) -> "ClusterModel":
        """One cluster, zero prior and infinite radius: the agent then behaves as plain linear UCB."""
        edges = edges or default_edges()
        n = edges.n_bins
        uniform = tuple([1.0 / n] * n)
        return cls((Cluster(0, uniform, math.inf, tuple([0.0] * len(actions))),), edges, tuple(actions))

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "bin_edges": list(self.bin_edges.edges),
            "actions_dbm": list(self.actions),
            "clusters": [
                {
                    "id": c.id,
                    "centroid": list(c.centroid),
                    # JSON has no infinity; null marks an unbounded radius.
                    "radius": None if math.isinf(c.radius) else c.radius,
                    "avg_utility": list(c.avg_utility),
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        if d.get("format") != MODEL_FORMAT:
            raise ClusteringError(f"not a cluster model file (format={d.get('format')!r})")
        if d.get("version") != MODEL_VERSION:
            raise ClusteringError(f"unsupported cluster model version {d.get('version')!r}")
        clusters = tuple(
            Cluster(
                int(c["id"]),
                tuple(float(x) for x in c["centroid"]),
                math.inf if c["radius"] is None else float(c["radius"]),
                tuple(float(x) for x in c["avg_utility"]),
            )
            for c in d["clusters"]
        )
        return cls(clusters, BinEdges(tuple(d["bin_edges"])), tuple(float(a) for a in d["actions_dbm"]))

    def save(self, path) -> None:
        # repr-exact floats keep the save/load round trip bit-identical
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _vectors(states) -> np.ndarray:
    rows = [s.as_array() if isinstance(s, SensingFingerprint) else np.asarray(s, dtype=float) for s in states]
    return np.vstack(rows)


def centroid(members) -> np.ndarray:
    """Elementwise mean of member fingerprints."""
    if len(members) == 0:
        raise ClusteringError("centroid of an empty cluster")
    m = _vectors(members).mean(axis=0)
    return m / m.sum()


def radius(members, center) -> float:
    """Largest KL divergence from a member to the centroid."""
    if len(members) == 0:
        raise ClusteringError("radius of an empty cluster")
    return max(kl_divergence(m, center) for m in members)


def avg_utility(members: Sequence[LabeledState], fallback=None) -> np.ndarray:
    """Per-arm mean over members, ignoring NaN; arms never observed take ``fallback`` (default 0)."""
    if len(members) == 0:
        raise ClusteringError("average utility of an empty cluster")
    u = np.array([m.utility for m in members], dtype=float)
    seen = ~np.isnan(u)
    n = seen.sum(axis=0)
    total = np.where(seen, u, 0.0).sum(axis=0)
    fb = np.zeros(u.shape[1]) if fallback is None else np.asarray(fallback, dtype=float)
    return np.where(n > 0, total / np.maximum(n, 1), fb)


def nearest_cluster(state, model: ClusterModel) -> int:
    """Index of the centroid with smallest D(state || centroid); ties go to the lowest id."""
    d = kl_to_many(state, model.centroids)
    return int(np.argmin(d))  # argmin returns the first minimum


def kmeans_objective(x: np.ndarray, centroids: np.ndarray, assign: np.ndarray) -> float:
    d = kl_matrix(x, centroids)
    return float(d[np.arange(len(x)), assign].sum())


def kmeans_kl(states, n_clusters: int, seed: int = 0, max_iters: int = 100):
    """Lloyd iterations with KL(state || centroid) assignment and arithmetic-mean centroids.

    Initial centroids use k-means++ style seeding under the KL distance. A cluster that
    empties is re-seeded with the state farthest from its current centroid.

    Returns ``(assignments, centroids, objective_history)``.
    """
    x = _vectors(states)
    n = len(x)
    if n_clusters < 1:
        raise ClusteringError("need at least one cluster")
    if n < n_clusters:
        raise ClusteringError(f"{n} states cannot form {n_clusters} clusters")
    rng = np.random.default_rng(seed)

    cent = np.empty((n_clusters, x.shape[1]))
    cent[0] = x[rng.integers(n)]
    for k in range(1, n_clusters):
        dmin = kl_matrix(x, cent[:k]).min(axis=1)
        total = dmin.sum()
        idx = int(rng.choice(n, p=dmin / total)) if total > 0 else int(rng.integers(n))
        cent[k] = x[idx]

    assign = np.full(n, -1)
    history = []
    for _ in range(max(1, max_iters)):
        dist = kl_matrix(x, cent)
        new_assign = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(n), new_assign].sum()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        _update_centroids(x, assign, cent, dist)
    history.append(kmeans_objective(x, cent, assign))
    return assign, cent, history


def _update_centroids(x, assign, cent, dist):
    n_clusters = len(cent)
    taken = set()
    for k in range(n_clusters):
        members = assign == k
        if members.any():
            m = x[members].mean(axis=0)
            cent[k] = m / m.sum()
    for k in range(n_clusters):
        if not (assign == k).any():
            # farthest state from its own centroid; skip ones already used for repair
            own = dist[np.arange(len(x)), assign].copy()
            own[list(taken)] = -np.inf
            far = int(np.argmax(own))
            taken.add(far)
            cent[k] = x[far]
            assign[far] = k


def train_cluster_model(
    traces: Sequence[LabeledState],
    n_clusters: int = DEFAULT_N_CLUSTERS,
    seed: int = 0,
    actions: Sequence[float] | None = None,
    edges: BinEdges | None = None,
    max_iters: int = 100,
) -> ClusterModel:
    if len(traces) < n_clusters:
        raise ClusteringError(
            f"insufficient traces: got {len(traces)}, need at least {n_clusters} (one per cluster)"
        )
    n_a = len(traces[0].utility)
    if any(len(t.utility) != n_a for t in traces):
        raise ClusteringError("all traces must carry the same number of utilities")
    if actions is None:
        from .bandit import DEFAULT_ACTIONS

        actions = DEFAULT_ACTIONS
    if len(actions) != n_a:
        raise ClusteringError(f"traces carry {n_a} utilities but the action set has {len(actions)} arms")
    n_r = traces[0].state.n_bins
    edges = edges or default_edges()
    if edges.n_bins != n_r:
        raise ClusteringError(f"traces have {n_r} bins but the bin edges define {edges.n_bins}")

    states = [t.state for t in traces]
    overall = avg_utility(traces)  # fills arms a cluster never observed
    assign, cent, _ = kmeans_kl(states, n_clusters, seed=seed, max_iters=max_iters)
    clusters = []
    for k in range(n_clusters):
        idx = np.flatnonzero(assign == k)
        members = [states[i] for i in idx]
        c = centroid(members)
        clusters.append(
            Cluster(
                k,
                tuple(c.tolist()),
                float(radius(members, c)),
                tuple(avg_utility([traces[i] for i in idx], overall).tolist()),
            )
        )
    return ClusterModel(tuple(clusters), edges, tuple(float(a) for a in actions))


# -- trace CSV ---------------------------------------------------------------

def write_traces(path, traces: Sequence[LabeledState], extra: Sequence[dict] | None = None) -> None:
    """Trace rows: ``epoch, bin_0..bin_{N_r-1}, util_0..util_{N_a-1}`` plus optional tag columns."""
    if not traces:
        raise ClusteringError("no traces to write")
    n_r, n_a = traces[0].state.n_bins, len(traces[0].utility)
    tag_cols = list(extra[0].keys()) if extra else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + [f"bin_{j}" for j in range(n_r)] + [f"util_{a}" for a in range(n_a)] + tag_cols)
        for i, t in enumerate(traces):
            tags = [extra[i][c] for c in tag_cols] if extra else []
            w.writerow([t.state.epoch] + [repr(float(b)) for b in t.state.bins] + [repr(float(u)) for u in t.utility] + tags)


def read_traces(path) -> list[LabeledState]:
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None:
            raise ClusteringError(f"{path}: empty trace file")
        bin_cols = [i for i, h in enumerate(header) if h.startswith("bin_")]
        util_cols = [i for i, h in enumerate(header) if h.startswith("util_")]
        if not bin_cols or not util_cols or header[0] != "epoch":
            raise ClusteringError(f"{path}: trace header must be epoch, bin_*, util_*")
        for line_no, row in enumerate(r, start=2):
            try:
                bins = [float(row[i]) for i in bin_cols]
                util = tuple(float(row[i]) for i in util_cols)
                fp = SensingFingerprint.from_vector(bins, epoch=int(row[0]))
            except (ValueError, IndexError) as exc:
                raise ClusteringError(f"{path}:{line_no}: {exc}") from exc
            out.append(LabeledState(fp, util))
    return out
