"""Flat-array state for the slot kernel and backend selection.

Two interchangeable kernels advance the contention/transmission state machine
one 9 us slot at a time: a compiled Cython module (``_slotloop``) and a pure
Python reference (``_slotloop_py``). Both consume the same pre-drawn uniform
buffer in the same order, so for a given state they produce identical results.

Set ``COEXSIM_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import _slotloop_py
from .mac import SLOT_SECONDS, Phase

try:  # pragma: no cover - depends on the build
    from . import _slotloop as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

MAX_SEGMENTS = 32
RNG_BUFFER = 8192

# indices into SlotState.scal
UPOS, DIRTY, N_ACTIVE = 0, 1, 2


def available_backends() -> list[str]:
    return (["cython"] if _compiled is not None else []) + ["python"]


def get_backend(name: str | None = None):
    name = name or os.environ.get("COEXSIM_BACKEND") or ("cython" if _compiled is not None else "python")
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled slot kernel not built; run `pip install -e .` or use the python backend")
        return _compiled
    if name == "python":
        return _slotloop_py
    raise ValueError(f"unknown backend {name!r}")


def default_backend_name() -> str:
    return get_backend().BACKEND


class SlotState:
    """Everything the slot kernel reads or mutates.

    Entities are contention instances (one LBT state machine and one queue
    each); nodes are physical radios with positions. Several entities may share
    a transmitting node, in which case same-slot starts are resolved as an
    internal (virtual) collision.
    """

    def __init__(self, n_nodes, tx_node, rx_node, tx_power_mw, node_power_mw, lbt, n_bins,
                 *, noise_mw, bandwidth_hz, se_cap, sinr_threshold_db, rate_margin_db,
                 segment_bits, max_tx_slots, sifs_slots, ack_slots, rng, file_capacity=256):
        E = len(tx_node)
        self.n_entities = E
        self.n_nodes = n_nodes
        self.rng = rng
        i64 = np.int64
        self.tx_node = np.asarray(tx_node, dtype=i64)
        self.rx_node = np.asarray(rx_node, dtype=i64)
        self.tx_power_mw = np.asarray(tx_power_mw, dtype=float)
        self.node_power_mw = np.asarray(node_power_mw, dtype=float)
        self.gain = np.zeros((n_nodes, n_nodes))
        self.gamma = np.array([c.gamma for c in lbt], dtype=float)
        self.w_min = np.array([c.w_min for c in lbt], dtype=i64)
        self.w_max = np.array([c.w_max for c in lbt], dtype=i64)
        self.aifs = np.array([c.aifs for c in lbt], dtype=i64)
        self.max_stage = np.array([c.max_stage for c in lbt], dtype=i64)
        self.retry_limit = np.array([c.retry_limit for c in lbt], dtype=i64)

        self.noise_mw = float(noise_mw)
        self.bandwidth_hz = float(bandwidth_hz)
        self.se_cap = float(se_cap)
        self.thr_lin = 10.0 ** (sinr_threshold_db / 10.0)
        self.se_floor = math.log2(1.0 + self.thr_lin)
        self.margin_lin = 10.0 ** (-rate_margin_db / 10.0)
        self.slot_sec = SLOT_SECONDS
        self.segment_bits = int(segment_bits)
        self.max_tx_slots = int(max_tx_slots)
        self.sifs_slots = int(sifs_slots)
        self.ack_slots = int(ack_slots)

        z = lambda dt=i64: np.zeros(E, dtype=dt)  # noqa: E731
        self.phase = z()
        self.counter = z()
        self.stage = z()
        self.defer_left = z()
        self.retries = z()
        self.tx_left = z()
        self.seg_cur = z()
        self.seg_off = z()
        self.n_seg = z()
        self.full_slots = z()
        self.last_bits = z()
        self.last_slots = z()
        self.ppdu_ok_bits = z()
        self.ppdu_fail_bits = z()
        self.ack_ok = z()
        self.req_sinr = z(float)
        self.fails = np.zeros((E, MAX_SEGMENTS), dtype=i64)
        self.y_dbm = z(float)
        self.y_bin = z()
        self.sinr_ok = z()
        self.head = np.full(E, -1, dtype=i64)
        self.tail = np.full(E, -1, dtype=i64)
        self.node_started = np.full(n_nodes, -1, dtype=i64)

        # cumulative counters
        self.bits_ok = z()
        self.bits_fail = z()
        self.bits_drop = z()
        self.n_tx = z()
        self.n_fail = z()
        self.n_freeze = z()
        self.n_vcoll = z()
        self.airtime = z()
        self.hist = np.zeros((E, n_bins), dtype=i64)
        self.edges = np.zeros(n_bins + 1)

        self.n_files = 0
        self._alloc_files(file_capacity)
        self.urand = rng.random(RNG_BUFFER)
        self.scal = np.zeros(3, dtype=i64)
        self.scal[DIRTY] = 1
        self.slot = 0

    # -- files -------------------------------------------------------------

    def _alloc_files(self, cap: int) -> None:
        old = self.n_files
        names = ("f_arrival", "f_remaining", "f_delivered", "f_dropped", "f_done", "f_next", "f_entity", "f_bits")
        for nm in names:
            new = np.full(cap, -1 if nm in ("f_done", "f_next") else 0, dtype=np.int64)
            if old:
                new[:old] = getattr(self, nm)[:old]
            setattr(self, nm, new)
        self.f_arrival_time = np.concatenate([self.f_arrival_time[:old], np.zeros(cap - old)]) if old else np.zeros(cap)

    def add_file(self, entity: int, arrival_time: float, bits: int) -> int:
        if self.n_files == len(self.f_arrival):
            self._alloc_files(2 * len(self.f_arrival))
        f = self.n_files
        self.n_files += 1
        self.f_entity[f] = entity
        self.f_arrival_time[f] = arrival_time
        self.f_arrival[f] = int(math.ceil(arrival_time / SLOT_SECONDS - 1e-9))
        self.f_bits[f] = bits
        self.f_remaining[f] = bits
        self.f_next[f] = -1
        t = self.tail[entity]
        if t >= 0:
            self.f_next[t] = f
        else:
            self.head[entity] = f
        self.tail[entity] = f
        return f

    def queued_bits(self) -> int:
        return int(self.f_remaining[: self.n_files].sum())

    # -- per-epoch plumbing ------------------------------------------------

    def set_gains(self, gain: np.ndarray) -> None:
        self.gain[:, :] = gain
        self.scal[DIRTY] = 1

    def set_gamma(self, entity: int, gamma: float) -> None:
        self.gamma[entity] = gamma

    def advance(self, n_end: int, mon_start: int = 0, mon_end: int = 0, backend=None) -> None:
        """Run slots [self.slot, n_end), sampling sensed power for slots in [mon_start, mon_end)."""
        be = backend or get_backend()
        while self.slot < n_end:
            if self.scal[UPOS] + self.n_entities > len(self.urand):
                self.urand = self.rng.random(RNG_BUFFER)
                self.scal[UPOS] = 0
            self.slot = int(be.advance(self, self.slot, n_end, mon_start, mon_end))

    def is_transmitting(self, entity: int) -> bool:
        return self.phase[entity] in (Phase.TX_DATA, Phase.TX_ACK)
