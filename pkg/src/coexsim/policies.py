"""Per-device threshold policies driven at epoch boundaries by the engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bandit import REWARD_SCALE, ActionSet, CmabAgent, plain_ucb_agent
from .clustering import ClusterModel
from .fingerprint import SensingFingerprint


@dataclass
class Decision:
    gamma: float
    cluster: int = -1
    theta: int = 0
    scores: tuple | None = None


class StandardPolicy:
    name = "standard"

    def __init__(self, gamma: float):
        self.gamma = float(gamma)

    def decide(self, epoch: int, reward_bps: float, fp: SensingFingerprint | None) -> Decision:
        return Decision(self.gamma)


class RandomPolicy:
    """Uniform integer threshold in [low, high] dBm, redrawn every epoch."""

    name = "random"

    def __init__(self, low: int, high: int, rng):
        self.low, self.high, self.rng = int(low), int(high), rng

    def decide(self, epoch, reward_bps, fp) -> Decision:
        return Decision(float(self.rng.integers(self.low, self.high + 1)))


class ExplorePolicy:
    """Uniform arm of the bandit's action set every epoch; used to gather labeled traces."""

    name = "explore"

    def __init__(self, actions: ActionSet, rng):
        self.actions, self.rng = actions, rng
        self.arm = -1

    def decide(self, epoch, reward_bps, fp) -> Decision:
        self.arm = int(self.rng.integers(len(self.actions)))
        return Decision(self.actions[self.arm])


class BanditPolicy:
    """Wraps a CMAB agent; epoch 0 runs at ``initial_gamma`` to collect the first fingerprint."""

    def __init__(self, agent: CmabAgent, initial_gamma: float, name: str = "cmab", debug: bool = False):
        self.agent = agent
        self.initial_gamma = float(initial_gamma)
        self.name = name
        self.debug = debug
        self.started = False

    def decide(self, epoch, reward_bps, fp) -> Decision:
        # fp is None when the last monitoring window had no backoff slots
        ag = self.agent
        theta = 0
        if not self.started:
            if fp is None:
                return Decision(self.initial_gamma)
            ag.initialize(fp)
            self.started = True
        else:
            theta = int(ag.update(reward_bps * REWARD_SCALE, fp if fp is not None else ag.last_fingerprint))
        scores = tuple(np.copy(s) for s in ag.scores()) if self.debug else None
        a, _ = ag.select_action()
        ag.reg.check()
        return Decision(ag.actions[a], ag.cluster_id, theta, scores)


def make_cmab(actions: ActionSet, model: ClusterModel, alpha: float, initial_gamma: float, debug=False):
    return BanditPolicy(CmabAgent(actions, model, alpha), initial_gamma, "cmab", debug)


def make_ucb(actions: ActionSet, alpha: float, initial_gamma: float, edges=None, debug=False):
    return BanditPolicy(plain_ucb_agent(actions, alpha, edges), initial_gamma, "ucb", debug)
