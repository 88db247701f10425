"""Slot-level listen-before-talk contention (Wi-Fi EDCA / NR-U Cat-4 LBT).

This is the reference state machine. The slot kernels in ``_slotloop_py`` and
``_slotloop`` implement exactly the same transitions on flat arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

SLOT_SECONDS = 9e-6


class Phase(enum.IntEnum):
    IDLE = 0
    DEFER = 1
    BACKOFF = 2
    TX_DATA = 3
    TX_ACK = 4


class Cca(enum.IntEnum):
    IDLE = 0
    BUSY = 1


class MacAction(str, enum.Enum):
    DEFER = "defer"
    DECREMENT = "decrement"
    FREEZE = "freeze"
    START_TX = "start_tx"
    CONTINUE_TX = "continue_tx"
    IDLE = "idle"


def _pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class LbtConfig:
    w_min: int
    w_max: int
    aifs: int
    max_stage: int = 6
    retry_limit: int = 7
    gamma: float = -62.0

    def __post_init__(self):
        if not (0 < self.w_min <= self.w_max) or not (_pow2(self.w_min) and _pow2(self.w_max)):
            raise ValueError(f"contention window bounds must be powers of two with 0 < w_min <= w_max, got {self.w_min}, {self.w_max}")
        if self.aifs < 1:
            raise ValueError("aifs must be at least one slot")
        if self.max_stage < 0 or self.retry_limit < 1:
            raise ValueError("max_stage must be >= 0 and retry_limit >= 1")

    def with_gamma(self, gamma: float) -> "LbtConfig":
        return LbtConfig(self.w_min, self.w_max, self.aifs, self.max_stage, self.retry_limit, gamma)


# Wi-Fi best-effort access category and NR-U priority class 2.
WIFI_BE = LbtConfig(w_min=16, w_max=1024, aifs=3, gamma=-62.0)
NRU_PC2 = LbtConfig(w_min=16, w_max=64, aifs=3, gamma=-72.0)


def contention_window(stage: int, cfg: LbtConfig) -> int:
    # cap the exponent so huge stages do not build huge ints
    return min(cfg.w_min << min(stage, 62), cfg.w_max)


def backoff_from_uniform(u: float, stage: int, cfg: LbtConfig) -> int:
    """Map u in [0, 1) onto {0, ..., min(2^stage * w_min, w_max) - 1}."""
    return int(u * contention_window(stage, cfg))


def draw_backoff(stage: int, cfg: LbtConfig, rng) -> int:
    return backoff_from_uniform(rng.random(), stage, cfg)


def cca_decision(power_dbm: float, gamma: float) -> Cca:
    return Cca.IDLE if power_dbm <= gamma else Cca.BUSY


@dataclass
class BackoffState:
    cfg: LbtConfig
    counter: int = 0
    stage: int = 0
    defer_remaining: int = 0
    phase: Phase = Phase.IDLE
    retries: int = 0
    freezes: int = 0

    def __post_init__(self):
        if self.phase == Phase.DEFER and self.defer_remaining == 0:
            self.defer_remaining = self.cfg.aifs

    def on_arrival(self) -> None:
        if self.phase == Phase.IDLE:
            self.phase = Phase.DEFER
            self.defer_remaining = self.cfg.aifs


def step_slot(state: BackoffState, cca: Cca, pending: bool, draw=None) -> MacAction:
    """Advance one contention slot.

    ``draw`` is a zero-argument callable returning u in [0, 1); it is used only
    when the medium turns busy during deferral with no counter drawn yet.
    """
    ph = state.phase
    if ph in (Phase.TX_DATA, Phase.TX_ACK):
        return MacAction.CONTINUE_TX
    if ph == Phase.IDLE:
        if not pending:
            return MacAction.IDLE
        state.on_arrival()
        ph = state.phase
    busy = cca == Cca.BUSY
    if ph == Phase.DEFER:
        if busy:
            state.defer_remaining = state.cfg.aifs
            if state.counter == 0:
                if draw is None:
                    raise ValueError("busy deferral needs a random draw")
                state.counter = backoff_from_uniform(draw(), state.stage, state.cfg)
        else:
            state.defer_remaining -= 1
            if state.defer_remaining == 0:
                state.phase = Phase.BACKOFF
        return MacAction.DEFER
    # BACKOFF
    if busy:
        state.phase = Phase.DEFER
        state.defer_remaining = state.cfg.aifs
        state.freezes += 1
        return MacAction.FREEZE
    if state.counter > 0:
        state.counter -= 1
        return MacAction.DECREMENT
    if pending:
        state.phase = Phase.TX_DATA
        return MacAction.START_TX
    state.phase = Phase.IDLE
    return MacAction.IDLE


def on_tx_result(state: BackoffState, ack: bool, u: float) -> bool:
    """Apply an ACK/NACK, draw the next counter from ``u`` and return to deferral.

    Returns True when the retry limit was hit and the head segment must be dropped.
    """
    drop = False
    if ack:
        state.stage = 0
        state.retries = 0
    else:
        state.stage = min(state.stage + 1, state.cfg.max_stage)
        state.retries += 1
        if state.retries >= state.cfg.retry_limit:
            drop = True
            state.retries = 0
            state.stage = 0
    state.counter = backoff_from_uniform(u, state.stage, state.cfg)
    state.phase = Phase.DEFER
    state.defer_remaining = state.cfg.aifs
    return drop


def slots_for(seconds: float) -> int:
    return max(1, math.ceil(seconds / SLOT_SECONDS - 1e-9))
