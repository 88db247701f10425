"""Clustering-based linear UCB agent for sensing-threshold selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import ClusterModel, nearest_cluster
from .fingerprint import SensingFingerprint, kl_divergence

DEFAULT_ACTIONS = tuple(float(g) for g in range(-82, -61, 2))
DEFAULT_ALPHA = 2.0
REWARD_SCALE = 1e-6  # b/s -> Mb/s


@dataclass(frozen=True)
class ActionSet:
    thresholds: tuple[float, ...] = DEFAULT_ACTIONS

    def __post_init__(self):
        th = tuple(float(g) for g in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        if len(th) < 2:
            raise ValueError("action set needs at least two thresholds")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if th[0] < -95.0 or th[-1] > -40.0:
            raise ValueError("thresholds must lie within [-95, -40] dBm")

    def __len__(self) -> int:
        return len(self.thresholds)

    def __getitem__(self, i: int) -> float:
        return self.thresholds[i]

    def vector(self, a: int) -> np.ndarray:
        """One-hot action vector for arm ``a``."""
        x = np.zeros(len(self.thresholds))
        x[a] = 1.0
        return x


@dataclass(frozen=True)
class RewardObservation:
    bits_ok: float
    bits_failed: float
    duration: float

    def __post_init__(self):
        if self.bits_ok < 0 or self.bits_failed < 0:
            raise ValueError("bit counts must be nonnegative")


def observed_reward(obs: RewardObservation) -> float:
    """Net goodput over the epoch in b/s; negative when failures dominate."""
    if obs.duration <= 0:
        raise ValueError(f"epoch duration must be positive, got {obs.duration}")
    return (obs.bits_ok - obs.bits_failed) / obs.duration


def confidence_bound(X: np.ndarray, x: np.ndarray, t: int, alpha: float) -> float:
    """alpha * sqrt(x' X^-1 x * log(t + 1))."""
    q = float(x @ np.linalg.solve(X, x))
    return alpha * math.sqrt(max(q, 0.0) * math.log(t + 1))


@dataclass
class RegressionState:
    n_arms: int
    X: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)
    mu: np.ndarray = field(init=False)
    pulls: np.ndarray = field(init=False)

    def __post_init__(self):
        self.reset()

    def reset(self) -> None:
        self.X = np.eye(self.n_arms)
        self.b = np.zeros(self.n_arms)
        self.mu = np.zeros(self.n_arms)
        self._x_inv_diag = np.ones(self.n_arms)
        self.pulls = np.zeros(self.n_arms, dtype=np.int64)

    def add(self, x: np.ndarray, reward: float) -> None:
        self.X += np.outer(x, x)
        self.b += reward * x
        self.pulls += (x != 0).astype(np.int64)
        self.mu = np.linalg.solve(self.X, self.b)
        self._x_inv_diag = np.diag(np.linalg.inv(self.X)).copy()

    def assign(self, X: np.ndarray, b: np.ndarray) -> None:
        """Load an arbitrary symmetric positive-definite X and vector b (pull counts are left untouched)."""
        self.X = np.array(X, dtype=float)
        self.b = np.array(b, dtype=float)
        self.mu = np.linalg.solve(self.X, self.b)
        self._x_inv_diag = np.diag(np.linalg.inv(self.X)).copy()

    def width(self) -> np.ndarray:
        """x_a' X^-1 x_a for every one-hot arm."""
        return self._x_inv_diag

    def check(self) -> None:
        off = self.X - np.diag(np.diag(self.X))
        assert not off.any(), "X must stay diagonal under one-hot actions"
        assert np.array_equal(np.diag(self.X), 1.0 + self.pulls), "diag(X) must equal 1 + pulls"


@dataclass(frozen=True)
class ClusterView:
    cluster_id: int
    centroid: np.ndarray
    radius: float
    prior: np.ndarray


def detect_change(previous: SensingFingerprint, view: ClusterView) -> bool:
    """True when the last fingerprint left the current cluster's radius (strictly)."""
    return kl_divergence(previous, view.centroid) > view.radius


class CmabAgent:
    """Per-device learner.

    Call :meth:`initialize` with the first fingerprint, then alternate
    :meth:`select_action` and :meth:`update` once per epoch.
    """

    def __init__(self, actions: ActionSet, model: ClusterModel, alpha: float = DEFAULT_ALPHA):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        if tuple(model.actions) != tuple(actions.thresholds):
            raise ValueError("cluster model action set does not match the agent's")
        self.actions = actions
        self.model = model
        self.alpha = float(alpha)
        self.reg = RegressionState(len(actions))
        self.view: ClusterView | None = None
        self.t = 0
        self.last_action: int | None = None
        self.last_fingerprint: SensingFingerprint | None = None
        self.last_theta = False
        self.n_switches = 0

    def _load_cluster(self, k: int) -> None:
        c = self.model.clusters[k]
        self.view = ClusterView(k, np.asarray(c.centroid), c.radius, np.asarray(c.avg_utility))

    def initialize(self, fingerprint: SensingFingerprint) -> None:
        self._load_cluster(nearest_cluster(fingerprint, self.model))
        self.reg.reset()
        self.t = 1
        self.last_action = None
        self.last_fingerprint = fingerprint

    def reset_regression(self) -> None:
        self.reg.reset()

    @property
    def cluster_id(self) -> int:
        return self.view.cluster_id

    def scores(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-arm (prior, fractional estimate, confidence bound) at the current epoch."""
        cb = self.alpha * np.sqrt(self.reg.width() * math.log(self.t + 1))
        return self.view.prior, self.reg.mu, cb

    def select_action(self) -> tuple[int, np.ndarray]:
        if self.view is None:
            raise RuntimeError("agent not initialized")
        prior, mu, cb = self.scores()
        total = prior + mu + cb
        a = int(np.argmax(total))  # first maximum: lowest threshold wins ties
        self.last_action = a
        return a, self.actions.vector(a)

    def update(self, reward: float, fingerprint: SensingFingerprint) -> bool:
        """Fold in last epoch's reward and fingerprint. Returns the change flag."""
        if self.last_action is None:
            raise RuntimeError("update() before select_action()")
        self.t += 1
        theta = detect_change(fingerprint, self.view)
        if theta:
            self._load_cluster(nearest_cluster(fingerprint, self.model))
            self.reg.reset()
            self.n_switches += 1
        else:
            self.reg.add(self.actions.vector(self.last_action), reward)
        self.last_fingerprint = fingerprint
        self.last_theta = theta
        return theta


def plain_ucb_agent(actions: ActionSet, alpha: float = DEFAULT_ALPHA, edges=None) -> CmabAgent:
    """Single trivial cluster with zero prior: standard linear UCB that never restarts."""
    return CmabAgent(actions, ClusterModel.single(actions.thresholds, edges), alpha)


def expected_regret(true_utility: Sequence[float], action: int) -> float:
    mu = np.asarray(true_utility, dtype=float)
    return float(mu.max() - mu[action])


@dataclass
class RegretTracker:
    history: list[float] = field(default_factory=list)
    total: float = 0.0

    def accumulate(self, g: float) -> float:
        if g < 0:
            raise ValueError("expected regret cannot be negative")
        self.history.append(g)
        self.total += g
        return self.total

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.history)
