"""Sensing fingerprints: normalized histograms of sensed power and their KL divergence."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

KL_SMOOTHING = 1e-6


class InsufficientObservationError(ValueError):
    """Raised when a monitoring window produced no power samples."""


@dataclass(frozen=True)
class PowerSample:
    value: float  # dBm
    slot_index: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"power sample must be finite, got {self.value}")


@dataclass(frozen=True)
class BinEdges:
    """Strictly increasing power levels (dBm) delimiting N_r histogram bins."""

    edges: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) < 3:
            raise ValueError("need at least 2 bins (3 edges)")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return len(self.edges) - 1

    @classmethod
    def uniform(cls, low: float, high: float, width: float) -> "BinEdges":
        n = int(round((high - low) / width))
        return cls(tuple(low + i * width for i in range(n + 1)))

    def index(self, value: float) -> int:
        """Bin index of ``value``; values outside the range clamp to the edge bins."""
        return bin_index(value, self.edges)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=float)


def bin_index(value: float, edges: Sequence[float]) -> int:
    # Shared with the slot kernels; keep the comparison order identical there.
    n_bins = len(edges) - 1
    if value < edges[1]:
        return 0
    if value >= edges[n_bins - 1]:
        return n_bins - 1
    lo, hi = 1, n_bins - 1
    # invariant: edges[lo] <= value < edges[hi]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if value < edges[mid]:
            hi = mid
        else:
            lo = mid
    return lo


def default_edges() -> BinEdges:
    """24 bins of 2 dB over [-95, -47) dBm."""
    return BinEdges.uniform(-95.0, -47.0, 2.0)


@dataclass(frozen=True)
class SensingFingerprint:
    bins: tuple[float, ...]
    sample_count: int = 0
    epoch: int = 0

    def __post_init__(self):
        bins = tuple(float(b) for b in self.bins)
        object.__setattr__(self, "bins", bins)
        if len(bins) < 2:
            raise ValueError("fingerprint needs at least 2 bins")
        if any(b < 0.0 or b > 1.0 for b in bins):
            raise ValueError("fingerprint probabilities must lie in [0, 1]")
        if abs(math.fsum(bins) - 1.0) > 1e-9:
            raise ValueError(f"fingerprint must sum to 1, got {math.fsum(bins)!r}")

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bins, dtype=float)

    @classmethod
    def from_vector(cls, vec, sample_count: int = 0, epoch: int = 0) -> "SensingFingerprint":
        """Wrap an (approximately) normalized vector, renormalizing away rounding drift."""
        v = np.asarray(vec, dtype=float)
        if v.ndim != 1 or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("fingerprint vector must be finite and nonnegative")
        total = math.fsum(v)
        if total <= 0:
            raise ValueError("fingerprint vector has zero mass")
        v = v / total
        v = np.minimum(v, 1.0)
        return cls(tuple(v.tolist()), sample_count, epoch)


def fingerprint_from_counts(counts, epoch: int = 0) -> SensingFingerprint:
    """Normalize per-bin sample counts; empty counts raise InsufficientObservationError."""
    c = np.asarray(counts, dtype=np.int64)
    total = int(c.sum())
    if total <= 0:
        raise InsufficientObservationError(f"no power samples in epoch {epoch}")
    return SensingFingerprint(tuple((c / total).tolist()), total, epoch)


def build_fingerprint(samples: Sequence[PowerSample], edges: BinEdges, epoch: int = 0) -> SensingFingerprint:
    if not samples:
        raise InsufficientObservationError("cannot build a fingerprint from zero samples")
    counts = np.zeros(edges.n_bins, dtype=np.int64)
    for s in samples:
        counts[bin_index(s.value, edges.edges)] += 1
    return fingerprint_from_counts(counts, epoch)


def smooth(p: np.ndarray, eps: float = KL_SMOOTHING) -> np.ndarray:
    q = np.asarray(p, dtype=float) + eps
    return q / q.sum()


def _as_vector(f) -> np.ndarray:
    if isinstance(f, SensingFingerprint):
        return f.as_array()
    return np.asarray(f, dtype=float)


def kl_divergence(p, q, eps: float = KL_SMOOTHING) -> float:
    """KL divergence D(p || q) in nats after additive smoothing of both arguments.

    Accepts fingerprints or plain probability vectors.
    """
    pv, qv = _as_vector(p), _as_vector(q)
    if pv.shape != qv.shape:
        raise ValueError(f"dimension mismatch: {pv.shape} vs {qv.shape}")
    ps, qs = smooth(pv, eps), smooth(qv, eps)
    return max(float(np.sum(ps * np.log(ps / qs))), 0.0)


def kl_to_many(p, centroids: np.ndarray, eps: float = KL_SMOOTHING) -> np.ndarray:
    """Vectorized D(p || c_k) for each row c_k of ``centroids``."""
    pv = smooth(_as_vector(p), eps)
    cs = np.asarray(centroids, dtype=float) + eps
    cs = cs / cs.sum(axis=1, keepdims=True)
    if cs.shape[1] != pv.shape[0]:
        raise ValueError(f"dimension mismatch: {pv.shape[0]} vs {cs.shape[1]}")
    return np.maximum(np.sum(pv * np.log(pv / cs), axis=1), 0.0)


def kl_matrix(states: np.ndarray, centroids: np.ndarray, eps: float = KL_SMOOTHING) -> np.ndarray:
    """Pairwise D(state_i || centroid_k), shape (n_states, n_centroids)."""
    s = np.asarray(states, dtype=float) + eps
    s = s / s.sum(axis=1, keepdims=True)
    c = np.asarray(centroids, dtype=float) + eps
    c = c / c.sum(axis=1, keepdims=True)
    ent = np.sum(s * np.log(s), axis=1)
    cross = s @ np.log(c).T
    return np.maximum(ent[:, None] - cross, 0.0)
