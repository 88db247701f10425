"""Experiment description (JSON scenario files) and the topology / traffic / mobility operations."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .bandit import DEFAULT_ACTIONS, DEFAULT_ALPHA, ActionSet
from .fingerprint import BinEdges
from .mac import NRU_PC2, SLOT_SECONDS, WIFI_BE, LbtConfig
from .phy import PhyConfig, path_loss

WIFI, NRU = "wifi", "nru"
TECHNOLOGIES = (NRU, WIFI)
POLICIES = ("cmab", "standard", "random", "ucb")
MAX_DROP_TRIES = 10_000


class ScenarioError(ValueError):
    """Invalid scenario; the message names the offending field."""


@dataclass(frozen=True)
class CellSpec:
    technology: str
    position: tuple[float, float]


@dataclass(frozen=True)
class TrafficSpec:
    file_bytes: int = 500_000
    segment_bytes: int = 8_000
    arrival_rate: float = 1.0  # files/s per user
    direction: str = "downlink"


@dataclass(frozen=True)
class EpochSpec:
    epoch_s: float = 0.1
    monitor_s: float = 0.05
    monitor_offset_s: float = 0.0
    sense_s: float = SLOT_SECONDS


@dataclass(frozen=True)
class MacSpec:
    wifi: LbtConfig = WIFI_BE
    nru: LbtConfig = NRU_PC2
    max_tx_ms: float = 4.0
    sifs_us: float = 16.0
    ack_us: float = 44.0


@dataclass(frozen=True)
class BanditSpec:
    actions: tuple[float, ...] = DEFAULT_ACTIONS
    alpha: float = DEFAULT_ALPHA
    cluster_model: str | None = None
    bin_low: float = -95.0
    bin_high: float = -47.0
    bin_width: float = 2.0

    def edges(self) -> BinEdges:
        return BinEdges.uniform(self.bin_low, self.bin_high, self.bin_width)


@dataclass(frozen=True)
class Scenario:
    name: str = "indoor"
    room: tuple[float, float] = (40.0, 20.0)  # long axis, short axis (m)
    n_nru_cells: int = 3
    n_wifi_cells: int = 3
    cells: tuple[CellSpec, ...] | None = None
    users_per_cell: int = 5
    adapting_per_cell: int = 3
    policy: str = "cmab"
    standard_threshold: dict = field(default_factory=lambda: {WIFI: -62.0, NRU: -72.0})
    random_range: tuple[int, int] = (-82, -62)
    max_speed: float = 1.5
    min_rx_dbm: float = -82.0
    duration_epochs: int = 600
    seed: int = 1
    traffic: TrafficSpec = TrafficSpec()
    epochs: EpochSpec = EpochSpec()
    mac: MacSpec = MacSpec()
    phy: PhyConfig = PhyConfig()
    bandit: BanditSpec = BanditSpec()
    base_dir: str = "."

    def cell_layout(self) -> tuple[CellSpec, ...]:
        if self.cells is not None:
            return self.cells
        total = self.n_nru_cells + self.n_wifi_cells
        techs = []
        nru, wifi = self.n_nru_cells, self.n_wifi_cells
        while nru or wifi:  # interleave, NR-U first
            if nru:
                techs.append(NRU)
                nru -= 1
            if wifi:
                techs.append(WIFI)
                wifi -= 1
        length, width = self.room
        return tuple(
            CellSpec(tech, (length * (i + 0.5) / total, width / 2.0)) for i, tech in enumerate(techs)
        )

    def lbt(self, tech: str) -> LbtConfig:
        return self.mac.wifi if tech == WIFI else self.mac.nru

    @property
    def epoch_slots(self) -> int:
        return int(round(self.epochs.epoch_s / SLOT_SECONDS))

    @property
    def monitor_slots(self) -> int:
        return int(round(self.epochs.monitor_s / SLOT_SECONDS))

    @property
    def monitor_offset_slots(self) -> int:
        return int(round(self.epochs.monitor_offset_s / SLOT_SECONDS))

    def with_(self, **kw) -> "Scenario":
        return dataclasses.replace(self, **kw)

    def cluster_model_path(self) -> Path | None:
        if not self.bandit.cluster_model:
            return None
        p = Path(self.bandit.cluster_model)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self) -> "Scenario":
        err = _Checker()
        length, width = self.room
        err.check(length > 0 and width > 0, "room", "dimensions must be positive")
        err.check(self.users_per_cell >= 0, "users_per_cell", "must be >= 0")
        err.check(0 <= self.adapting_per_cell <= self.users_per_cell, "adapting_per_cell",
                  "must lie in [0, users_per_cell]")
        err.check(self.policy in POLICIES, "policy", f"must be one of {POLICIES}")
        err.check(self.duration_epochs >= 1, "duration_epochs", "must be >= 1")
        err.check(self.max_speed >= 0, "max_speed", "must be >= 0")
        lo, hi = self.random_range
        err.check(lo <= hi, "random_range", "low must not exceed high")
        ep = self.epochs
        err.check(0 < ep.sense_s <= ep.monitor_s <= ep.epoch_s, "epochs",
                  "need 0 < sense_s <= monitor_s <= epoch_s")
        err.check(ep.monitor_offset_s >= 0 and ep.monitor_offset_s + ep.monitor_s <= ep.epoch_s + 1e-12,
                  "epochs.monitor_offset_s", "monitoring window must fit inside the epoch")
        err.check(abs(ep.sense_s - SLOT_SECONDS) < 1e-12, "epochs.sense_s",
                  "only per-slot sensing (9e-6 s) is supported")
        tr = self.traffic
        err.check(tr.file_bytes > 0 and tr.segment_bytes > 0, "traffic", "file and segment sizes must be positive")
        err.check(tr.arrival_rate >= 0, "traffic.arrival_rate", "must be >= 0")
        err.check(tr.direction in ("downlink", "uplink"), "traffic.direction", "must be 'downlink' or 'uplink'")
        err.check(self.mac.max_tx_ms > 0, "mac.max_tx_ms", "must be positive")
        for tech in TECHNOLOGIES:
            err.check(tech in self.standard_threshold, f"standard_threshold.{tech}", "missing")
        cells = self.cell_layout()
        err.check(len(cells) >= 1, "cells", "need at least one cell")
        for i, c in enumerate(cells):
            err.check(c.technology in TECHNOLOGIES, f"cells[{i}].technology", f"must be one of {TECHNOLOGIES}")
            x, y = c.position
            err.check(0 <= x <= length and 0 <= y <= width, f"cells[{i}].position", "outside the room")
        if self.policy == "cmab":
            p = self.cluster_model_path()
            err.check(p is not None, "bandit.cluster_model", "cmab policy needs a cluster model file")
            err.check(p is None or p.exists(), "bandit.cluster_model", f"file not found: {p}")
        err.raise_if_any()
        return self


class _Checker:
    def __init__(self):
        self.problems: list[str] = []

    def check(self, ok: bool, name: str, msg: str) -> None:
        if not ok:
            self.problems.append(f"{name}: {msg}")

    def raise_if_any(self) -> None:
        if self.problems:
            raise ScenarioError("; ".join(self.problems))


# -- JSON -------------------------------------------------------------------

def _build(cls, data: dict, where: str, conv: dict | None = None):
    if not isinstance(data, dict):
        raise ScenarioError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        try:
            kw[k] = (conv or {}).get(k, lambda x: x)(v)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{where}.{k}: {exc}") from exc
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _lbt(d):
    return _build(LbtConfig, d, "mac")


def scenario_from_dict(d: dict, base_dir: str = ".") -> Scenario:
    d = dict(d)
    d.pop("$comment", None)
    conv = {
        "room": lambda v: tuple(float(x) for x in v),
        "random_range": lambda v: (int(v[0]), int(v[1])),
        "cells": lambda v: None if v is None else tuple(
            CellSpec(str(c["technology"]), (float(c["position"][0]), float(c["position"][1]))) for c in v
        ),
        "standard_threshold": lambda v: {str(k): float(x) for k, x in v.items()},
        "traffic": lambda v: _build(TrafficSpec, v, "traffic"),
        "epochs": lambda v: _build(EpochSpec, v, "epochs"),
        "mac": lambda v: _build(MacSpec, v, "mac", {"wifi": _lbt, "nru": _lbt}),
        "phy": lambda v: _build(PhyConfig, v, "phy"),
        "bandit": lambda v: _build(BanditSpec, v, "bandit", {"actions": lambda a: tuple(float(x) for x in a)}),
    }
    sc = _build(Scenario, d, "scenario", conv)
    try:
        ActionSet(sc.bandit.actions)
        sc.bandit.edges()
    except ValueError as exc:
        raise ScenarioError(f"bandit: {exc}") from exc
    return sc.with_(base_dir=str(base_dir))


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data, base_dir=str(path.parent)).validate()


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    d = dataclasses.asdict(sc)
    d.pop("base_dir")
    return d


def bundled_scenario(name: str) -> Path:
    return Path(__file__).parent / "data" / f"{name}.json"


# -- topology / traffic / mobility -----------------------------------------

def rx_power_dbm(tx_dbm: float, a, b, phy: PhyConfig) -> float:
    d = math.dist(a, b)
    return tx_dbm - path_loss(d, phy.carrier_ghz, phy.pathloss_model)


def drop_users(sc: Scenario, rng) -> list[tuple[int, tuple[float, float]]]:
    """Uniform drops per cell, rejected until the home cell is received above ``min_rx_dbm``.

    Returns (home cell index, position) for every user, cell by cell. The
    constraint uses median path loss (no shadowing).
    """
    length, width = sc.room
    out = []
    for ci, cell in enumerate(sc.cell_layout()):
        for _ in range(sc.users_per_cell):
            for _try in range(MAX_DROP_TRIES):
                pos = (float(rng.uniform(0.0, length)), float(rng.uniform(0.0, width)))
                if rx_power_dbm(sc.phy.tx_power_dbm, pos, cell.position, sc.phy) >= sc.min_rx_dbm:
                    out.append((ci, pos))
                    break
            else:
                raise ScenarioError(
                    f"min_rx_dbm: no position within {MAX_DROP_TRIES} tries receives cell {ci} above {sc.min_rx_dbm} dBm"
                )
    return out


def attach(user_nodes, cell_nodes, cell_tech, user_tech, rx_dbm: np.ndarray) -> dict[int, int]:
    """Map each user node to the same-technology cell node it receives strongest (ties: lowest id).

    ``rx_dbm[u, c]`` is the received power of cell node c at user node u.
    """
    out = {}
    for u, ut in zip(user_nodes, user_tech):
        best, best_p = -1, -math.inf
        for c, ct in zip(cell_nodes, cell_tech):
            if ct != ut:
                continue
            p = rx_dbm[u, c]
            if p > best_p:
                best, best_p = c, p
        if best < 0:
            raise ScenarioError(f"no {ut} cell for user node {u}")
        out[u] = best
    return out


def reflect(value: float, upper: float) -> float:
    """Fold a coordinate back into [0, upper] by mirror reflection at the walls."""
    if upper <= 0:
        return 0.0
    period = 2.0 * upper
    v = math.fmod(value, period)
    if v < 0:
        v += period
    return period - v if v > upper else v


def mobility_step(pos, dt: float, room, max_speed: float, rng) -> tuple[float, float]:
    """Random-walk step: uniform heading, speed uniform on [0, max_speed], reflecting walls."""
    if dt <= 0 or max_speed <= 0:
        return tuple(pos)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(0.0, max_speed)
    x = pos[0] + speed * dt * math.cos(heading)
    y = pos[1] + speed * dt * math.sin(heading)
    return reflect(x, room[0]), reflect(y, room[1])


def traffic_arrivals(rate: float, duration: float, rng, start: float = 0.0) -> list[float]:
    """Poisson file-arrival times in [start, start + duration)."""
    if rate <= 0 or duration <= 0:
        return []
    out = []
    t = start + rng.exponential(1.0 / rate)
    while t < start + duration:
        out.append(t)
        t += rng.exponential(1.0 / rate)
    return out


def segment_sizes(file_bytes: int, segment_bytes: int) -> list[int]:
    n_full, rem = divmod(file_bytes, segment_bytes)
    return [segment_bytes] * n_full + ([rem] if rem else [])
